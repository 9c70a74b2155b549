#pragma once

// Mel-cepstral distortion and word error rate.

#include <accear/error.hpp>
#include <accear/spectral.hpp>

#include <cctype>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace accear {

struct MfccConfig {
  std::size_t n_fft = 512;
  std::size_t hop = 500;
  std::size_t n_mels = 40;
  std::size_t order = 13;  // c1..cM, c0 dropped
  // mel power floor; sits well above 16-bit quantization noise (~1e-7 per band)
  double floor = 1e-4;

  void validate() const {
    if (order == 0 || order >= n_mels) throw ParameterError("MFCC order must be in [1, n_mels)");
    if (hop == 0) throw ParameterError("MFCC hop must be positive");
    if (!(floor > 0)) throw ParameterError("MFCC floor must be positive");
  }
};

/// frames x order, row-major.
struct Cepstra {
  std::size_t frames = 0;
  std::size_t order = 0;
  std::vector<double> data;

  double operator()(std::size_t t, std::size_t m) const { return data[t * order + m]; }
  double& operator()(std::size_t t, std::size_t m) { return data[t * order + m]; }
  bool operator==(const Cepstra&) const = default;
};

/// Orthonormal DCT-II of one vector.
inline std::vector<double> dct2_orthonormal(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) {
      s += x[i] * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(i) + 1.0) /
                           (2.0 * static_cast<double>(n)));
    }
    out[k] = s * std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
  }
  return out;
}

/// Frame t is centered on sample t * hop; floor(length / hop) frames.
inline Cepstra mfcc(std::span<const double> x, double rate_hz, const MfccConfig& cfg = {}) {
  cfg.validate();
  const std::size_t frames = x.size() / cfg.hop;
  if (frames == 0 || x.size() < cfg.n_fft) throw InputError("signal too short for MFCC analysis");
  std::vector<std::size_t> centers(frames);
  for (std::size_t t = 0; t < frames; ++t) centers[t] = t * cfg.hop;
  const auto spec = stft_at(x, rate_hz, cfg.n_fft, centers);
  const auto fb = build_mel_filterbank(cfg.n_mels, cfg.n_fft, rate_hz, 0.0, rate_hz / 2.0);

  Cepstra c{frames, cfg.order, std::vector<double>(frames * cfg.order)};
  std::vector<double> logmel(cfg.n_mels);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      double e = 0;
      for (std::size_t k = 0; k < spec.bins; ++k) e += fb.weights(m, k) * std::norm(spec.at(k, t));
      logmel[m] = std::log(e + cfg.floor);
    }
    const auto d = dct2_orthonormal(logmel);
    for (std::size_t m = 0; m < cfg.order; ++m) c(t, m) = d[m + 1];
  }
  return c;
}

inline Cepstra mfcc(const UniformSeries& s, const MfccConfig& cfg = {}) { return mfcc(s.values, s.rate_hz, cfg); }

/// (10 / ln 10) * sqrt(2 * sum (cr - cs)^2) per frame, averaged over frames.
inline double mcd(const Cepstra& ref, const Cepstra& syn) {
  if (ref.frames != syn.frames || ref.order != syn.order) {
    throw ShapeError("MCD needs equal shapes: " + std::to_string(ref.frames) + "x" + std::to_string(ref.order) + " vs " +
                     std::to_string(syn.frames) + "x" + std::to_string(syn.order));
  }
  if (ref.frames == 0) throw ShapeError("MCD of empty sequences");
  const double k = 10.0 / std::numbers::ln10;
  double total = 0;
  for (std::size_t t = 0; t < ref.frames; ++t) {
    double s = 0;
    for (std::size_t m = 0; m < ref.order; ++m) {
      const double d = ref(t, m) - syn(t, m);
      s += d * d;
    }
    total += k * std::sqrt(2.0 * s);
  }
  return total / static_cast<double>(ref.frames);
}

inline constexpr double kComprehensibleMcd = 8.0;

// ---------------------------------------------------------------------------
// WER

struct WerBreakdown {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t reference_length = 0;

  std::size_t edits() const { return substitutions + deletions + insertions; }
  double rate() const { return static_cast<double>(edits()) / static_cast<double>(reference_length); }
  bool operator==(const WerBreakdown&) const = default;
};

/// Whitespace split, lower-cased, punctuation removed; empty tokens dropped.
inline std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (!std::ispunct(c) || c == '\'') {
      if (c != '\'') cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

/// Unit-cost edit alignment. The traceback prefers a diagonal step (match or
/// substitution), then deletion, then insertion.
inline WerBreakdown wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  if (ref.empty()) throw InputError("WER needs a non-empty reference");
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({sub, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  WerBreakdown w;
  w.reference_length = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : 1)) {
        if (!same) ++w.substitutions;
        --i, --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++w.deletions;
      --i;
    } else {
      ++w.insertions;
      --j;
    }
  }
  return w;
}

inline WerBreakdown wer(std::string_view ref, std::string_view hyp) { return wer(tokenize_words(ref), tokenize_words(hyp)); }

// ---------------------------------------------------------------------------
// Report

struct EvalRow {
  std::string segment_id;
  double mcd = 0;
  bool has_wer = false;
  WerBreakdown wer;
};

inline void write_report_csv(std::ostream& os, const std::vector<EvalRow>& rows) {
  os << "segment_id,mcd,comprehensible,wer,S,D,I,N\n";
  for (const auto& r : rows) {
    std::ostringstream line;
    line.precision(6);
    line << std::fixed << r.segment_id << ',' << r.mcd << ',' << (r.mcd < kComprehensibleMcd ? "true" : "false") << ',';
    if (r.has_wer) {
      line << r.wer.rate() << ',' << r.wer.substitutions << ',' << r.wer.deletions << ',' << r.wer.insertions << ','
           << r.wer.reference_length;
    } else {
      line << ",,,,";
    }
    os << line.str() << '\n';
  }
}

}  // namespace accear
