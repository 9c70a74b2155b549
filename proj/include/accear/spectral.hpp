#pragma once

// Time-frequency transforms and the two image encodings the cGAN consumes:
// square-root linear-Hz images for the accelerometer condition and log1p mel
// images for the audio target.

#include <accear/error.hpp>
#include <accear/fft.hpp>
#include <accear/matrix.hpp>
#include <accear/signal_prep.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace accear {

enum class PadMode { reflect, zero };

/// Periodic Hann window (COLA at hop n/4 and n/2).
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

/// bins x frames, stored frame-major: frame t occupies [t * bins, (t + 1) * bins).
struct ComplexSpectrogram {
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<cplx> data;
  double rate_hz = 0;
  std::size_t n_fft = 0;
  std::size_t hop = 0;
  std::size_t signal_length = 0;
  PadMode pad = PadMode::reflect;

  cplx& at(std::size_t bin, std::size_t frame) { return data[frame * bins + bin]; }
  const cplx& at(std::size_t bin, std::size_t frame) const { return data[frame * bins + bin]; }

  Matrix magnitude() const {
    Matrix m(bins, frames);
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t k = 0; k < bins; ++k) m(k, t) = std::abs(at(k, t));
    }
    return m;
  }
};

inline std::size_t stft_frame_count(std::size_t length, std::size_t hop) { return 1 + length / hop; }

/// Frames centered on arbitrary sample positions, with n_fft/2 samples of
/// padding on each side of the input.
inline ComplexSpectrogram stft_at(std::span<const double> x, double rate_hz, std::size_t n_fft,
                                  std::span<const std::size_t> centers, PadMode pad = PadMode::reflect) {
  if (!is_power_of_two(n_fft)) throw ParameterError("n_fft must be a power of two");
  if (x.size() < n_fft) throw InputError("series shorter than one STFT frame");
  const std::size_t half = n_fft / 2;
  const std::size_t n = x.size();

  std::vector<double> padded(n + 2 * half, 0.0);
  std::copy(x.begin(), x.end(), padded.begin() + static_cast<std::ptrdiff_t>(half));
  if (pad == PadMode::reflect) {
    for (std::size_t i = 1; i <= half; ++i) {
      padded[half - i] = x[i];
      padded[half + n - 1 + i] = x[n - 1 - i];
    }
  }

  ComplexSpectrogram spec;
  spec.bins = half + 1;
  spec.frames = centers.size();
  spec.rate_hz = rate_hz;
  spec.n_fft = n_fft;
  spec.signal_length = n;
  spec.pad = pad;
  spec.data.resize(spec.bins * spec.frames);

  const auto window = hann_window(n_fft);
  const FftPlan plan(n_fft);
  std::vector<cplx> buf(n_fft);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    const std::size_t start = centers[t];
    if (start > n) throw ParameterError("frame center beyond the end of the series");
    for (std::size_t i = 0; i < n_fft; ++i) buf[i] = padded[start + i] * window[i];
    plan.transform(buf);
    std::copy(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(spec.bins),
              spec.data.begin() + static_cast<std::ptrdiff_t>(t * spec.bins));
  }
  return spec;
}

/// Centered framing: frame t is centered on sample t * hop of the input.
inline ComplexSpectrogram stft(std::span<const double> x, double rate_hz, std::size_t n_fft, std::size_t hop,
                               PadMode pad = PadMode::reflect) {
  if (hop == 0 || hop > n_fft) throw ParameterError("hop must be in (0, n_fft]");
  std::vector<std::size_t> centers(stft_frame_count(x.size(), hop));
  for (std::size_t t = 0; t < centers.size(); ++t) centers[t] = t * hop;
  auto spec = stft_at(x, rate_hz, n_fft, centers, pad);
  spec.hop = hop;
  return spec;
}

inline ComplexSpectrogram stft(const UniformSeries& s, std::size_t n_fft, std::size_t hop,
                               PadMode pad = PadMode::reflect) {
  return stft(s.values, s.rate_hz, n_fft, hop, pad);
}

/// Weighted overlap-add: the least-squares signal whose STFT is closest to
/// `spec` (analysis window reused for synthesis, divided by the summed
/// squared window).
inline UniformSeries istft(const ComplexSpectrogram& spec) {
  if (!is_power_of_two(spec.n_fft)) throw ParameterError("n_fft must be a power of two");
  if (spec.hop == 0 || spec.hop > spec.n_fft / 2) throw ParameterError("hop violates the Hann overlap-add condition");
  if (spec.bins != spec.n_fft / 2 + 1 || spec.data.size() != spec.bins * spec.frames) {
    throw ShapeError("malformed spectrogram");
  }
  const std::size_t n_fft = spec.n_fft;
  const std::size_t half = n_fft / 2;
  const std::size_t padded_len = (spec.frames - 1) * spec.hop + n_fft;
  std::vector<double> acc(padded_len, 0.0);
  std::vector<double> norm(padded_len, 0.0);

  const auto window = hann_window(n_fft);
  const FftPlan plan(n_fft);
  std::vector<cplx> buf(n_fft);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    for (std::size_t k = 0; k < spec.bins; ++k) buf[k] = spec.at(k, t);
    for (std::size_t k = spec.bins; k < n_fft; ++k) buf[k] = std::conj(buf[n_fft - k]);
    plan.transform(buf, true);
    const std::size_t start = t * spec.hop;
    for (std::size_t i = 0; i < n_fft; ++i) {
      acc[start + i] += buf[i].real() * window[i];
      norm[start + i] += window[i] * window[i];
    }
  }

  UniformSeries out{spec.rate_hz, std::vector<double>(spec.signal_length, 0.0)};
  for (std::size_t i = 0; i < spec.signal_length; ++i) {
    const std::size_t p = i + half;
    if (p < padded_len && norm[p] > 1e-10) out.values[i] = acc[p] / norm[p];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mel scale

inline double hz_to_mel(double f_hz) { return 2595.0 * std::log10(1.0 + f_hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

struct MelFilterbank {
  Matrix weights;  // n_mels x bins
  double fmin_hz = 0;
  double fmax_hz = 0;
  std::vector<double> centers_hz;
};

/// Triangles with centers uniformly spaced on the mel axis, sampled at the FFT
/// bin frequencies and rescaled so every filter peaks at exactly 1. A filter
/// narrower than the bin spacing takes the nearest bin.
inline MelFilterbank build_mel_filterbank(std::size_t n_mels, std::size_t n_fft, double rate_hz, double fmin_hz,
                                          double fmax_hz) {
  if (n_mels == 0) throw ParameterError("n_mels must be positive");
  if (!(fmin_hz >= 0) || !(fmin_hz < fmax_hz) || fmax_hz > rate_hz / 2 + 1e-9) {
    throw ParameterError("mel band must satisfy 0 <= fmin < fmax <= rate/2");
  }
  const std::size_t bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(fmin_hz);
  const double mel_hi = hz_to_mel(fmax_hz);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  }
  const double bin_hz = rate_hz / static_cast<double>(n_fft);

  MelFilterbank fb{Matrix(n_mels, bins), fmin_hz, fmax_hz, {}};
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    fb.centers_hz.push_back(center);
    double peak = 0;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      const double w = std::max(0.0, std::min((f - lo) / (center - lo), (hi - f) / (hi - center)));
      fb.weights(m, k) = w;
      peak = std::max(peak, w);
    }
    if (peak > 0) {
      for (std::size_t k = 0; k < bins; ++k) fb.weights(m, k) /= peak;
    } else {
      const auto nearest = static_cast<std::size_t>(std::llround(center / bin_hz));
      fb.weights(m, std::min(nearest, bins - 1)) = 1.0;
    }
  }
  return fb;
}

inline Matrix linear_to_mel(const Matrix& magnitude, const MelFilterbank& fb) {
  if (magnitude.rows != fb.weights.cols) throw ShapeError("magnitude rows do not match filterbank bins");
  return matmul(fb.weights, magnitude);
}

/// Minimum-norm least-squares inversion through the filterbank's
/// Moore-Penrose pseudo-inverse, clamped at zero. The pseudo-inverse is
/// computed once per filterbank.
class MelInverter {
 public:
  explicit MelInverter(const MelFilterbank& fb) : n_mels_(fb.weights.rows), bins_(fb.weights.cols) {
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(
        fb.weights.data.data(), static_cast<Eigen::Index>(n_mels_), static_cast<Eigen::Index>(bins_));
    for (double v : fb.weights.data) {
      if (!std::isfinite(v)) throw NumericError("mel filterbank contains non-finite weights");
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(w);
    if (cod.rank() == 0) throw NumericError("mel filterbank has rank zero; cannot invert");
    rank_ = static_cast<std::size_t>(cod.rank());
    const Eigen::MatrixXd pinv = cod.pseudoInverse();
    pinv_ = Matrix(bins_, n_mels_);
    for (std::size_t k = 0; k < bins_; ++k) {
      for (std::size_t m = 0; m < n_mels_; ++m) {
        pinv_(k, m) = pinv(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
      }
    }
  }

  std::size_t rank() const { return rank_; }

  Matrix operator()(const Matrix& mel) const {
    if (mel.rows != n_mels_) throw ShapeError("mel rows do not match filterbank");
    Matrix out = matmul(pinv_, mel);
    for (auto& v : out.data) v = std::max(0.0, v);
    return out;
  }

 private:
  std::size_t n_mels_;
  std::size_t bins_;
  std::size_t rank_ = 0;
  Matrix pinv_;
};

inline Matrix mel_to_linear(const Matrix& mel, const MelFilterbank& fb) { return MelInverter(fb)(mel); }

// ---------------------------------------------------------------------------
// Images

enum class Compression { sqrt, log1p };

inline double compress_value(double v, Compression c) { return c == Compression::sqrt ? std::sqrt(v) : std::log1p(v); }
inline double decompress_value(double v, Compression c) { return c == Compression::sqrt ? v * v : std::expm1(v); }

struct NormStats {
  double min = 0;
  double max = 1;
  bool operator==(const NormStats&) const = default;
};

enum class FreqAxis { linear_hz, mel };

struct SpectroImage {
  Matrix pixels;  // row 0 = lowest frequency
  Compression compression = Compression::sqrt;
  NormStats stats;
  FreqAxis freq_axis = FreqAxis::linear_hz;
  double units_per_row = 0;  // Hz or mel per row
  double seconds_per_col = 0;
};

/// Linear interpolation along rows to `size`, then frames cropped from the
/// start (or zero-padded) to `size`. Leading-aligned cropping keeps frame t
/// centered at t * hop for both the condition and the target.
inline Matrix fit_to_image(const Matrix& m, std::size_t size) {
  if (m.rows == 0 || m.cols == 0) throw ShapeError("empty matrix");
  Matrix out(size, size);
  for (std::size_t r = 0; r < size; ++r) {
    const double pos = size == 1 ? 0.0
                                 : static_cast<double>(r) * static_cast<double>(m.rows - 1) /
                                       static_cast<double>(size - 1);
    const auto lo = std::min(static_cast<std::size_t>(pos), m.rows - 1);
    const std::size_t hi = std::min(lo + 1, m.rows - 1);
    const double frac = pos - static_cast<double>(lo);
    for (std::size_t c = 0; c < std::min(size, m.cols); ++c) {
      out(r, c) = (1.0 - frac) * m(lo, c) + frac * m(hi, c);
    }
  }
  return out;
}

inline NormStats matrix_range(const Matrix& m) {
  NormStats s{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (double v : m.data) {
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
  }
  return s;
}

inline Matrix compress(const Matrix& m, Compression c) {
  Matrix out = m;
  for (auto& v : out.data) {
    if (v < 0) throw InputError("magnitudes must be non-negative");
    v = compress_value(v, c);
  }
  return out;
}

/// Affine map of already-compressed values into [0, 1], clamped.
inline Matrix normalize_compressed(const Matrix& compressed, const NormStats& stats) {
  if (!(stats.max > stats.min)) throw ParameterError("degenerate normalization stats (max <= min)");
  Matrix out = compressed;
  const double scale = 1.0 / (stats.max - stats.min);
  for (auto& v : out.data) v = std::clamp((v - stats.min) * scale, 0.0, 1.0);
  return out;
}

/// Entrywise compression, resize to `size` x `size`, then scaling into [0, 1]
/// with dataset-level stats expressed in the compressed domain.
inline SpectroImage compress_and_normalize(const Matrix& magnitude, const NormStats& stats, std::size_t size,
                                           Compression c = Compression::sqrt) {
  SpectroImage img;
  img.pixels = normalize_compressed(fit_to_image(compress(magnitude, c), size), stats);
  img.compression = c;
  img.stats = stats;
  return img;
}

/// Undo the [0, 1] scaling; the result is in the compressed domain.
inline Matrix denormalize(const Matrix& pixels, const NormStats& stats) {
  Matrix out = pixels;
  for (auto& v : out.data) v = stats.min + v * (stats.max - stats.min);
  return out;
}

inline Matrix decompress(const Matrix& m, Compression c) {
  Matrix out = m;
  for (auto& v : out.data) v = std::max(0.0, decompress_value(v, c));
  return out;
}

// ---------------------------------------------------------------------------
// Condition and target pipelines

struct SpectralConfig {
  double segment_seconds = 4.0;
  std::size_t image_size = 128;
  double accel_rate_hz = 1000.0;
  std::size_t accel_n_fft = 256;
  double audio_rate_hz = 16000.0;
  std::size_t audio_n_fft = 512;
  std::size_t mel_bins = 128;
  double mel_fmin_hz = 0.0;
  double mel_fmax_hz = 8000.0;
  bool per_image_norm = false;

  std::size_t accel_segment_samples() const { return static_cast<std::size_t>(std::llround(segment_seconds * accel_rate_hz)); }
  std::size_t audio_segment_samples() const { return static_cast<std::size_t>(std::llround(segment_seconds * audio_rate_hz)); }
  std::size_t accel_hop() const { return std::max<std::size_t>(1, accel_segment_samples() / image_size); }
  double frame_seconds() const { return segment_seconds / static_cast<double>(image_size); }

  /// One frame per image column at t * segment / image_size, rounded to the
  /// nearest accelerometer sample so columns line up with the audio frames.
  std::vector<std::size_t> accel_frame_centers() const {
    std::vector<std::size_t> c(image_size);
    for (std::size_t t = 0; t < image_size; ++t) {
      c[t] = static_cast<std::size_t>(std::llround(static_cast<double>(t) * frame_seconds() * accel_rate_hz));
    }
    return c;
  }
  std::size_t audio_hop() const { return std::max<std::size_t>(1, audio_segment_samples() / image_size); }

  void validate() const {
    if (image_size < 2) throw ParameterError("image size must be >= 2");
    if (mel_bins != image_size) throw ParameterError("mel bins must equal the image size");
    if (!is_power_of_two(accel_n_fft) || !is_power_of_two(audio_n_fft)) throw ParameterError("n_fft must be a power of two");
    if (accel_segment_samples() < accel_n_fft || audio_segment_samples() < audio_n_fft) {
      throw ParameterError("segment shorter than one STFT frame");
    }
    if (audio_segment_samples() % image_size != 0) throw ParameterError("audio segment must divide into image columns");
    if (accel_hop() > accel_n_fft || audio_hop() > audio_n_fft) {
      throw ParameterError("STFT hop exceeds n_fft; raise n_fft or the image size");
    }
  }
};

/// Square-root linear-Hz magnitudes resized to image geometry, before scaling.
inline Matrix accel_compressed(std::span<const double> segment_values, const SpectralConfig& cfg) {
  const auto spec = stft_at(segment_values, cfg.accel_rate_hz, cfg.accel_n_fft, cfg.accel_frame_centers());
  return fit_to_image(compress(spec.magnitude(), Compression::sqrt), cfg.image_size);
}

inline SpectroImage image_from_compressed(const Matrix& compressed, NormStats stats, Compression c,
                                          bool per_image) {
  if (per_image) {
    stats = matrix_range(compressed);
    if (!(stats.max > stats.min)) stats = {stats.min, stats.min + 1.0};
  }
  SpectroImage img;
  img.pixels = normalize_compressed(compressed, stats);
  img.compression = c;
  img.stats = stats;
  return img;
}

inline SpectroImage accel_to_image(std::span<const double> segment_values, const NormStats& stats,
                                   const SpectralConfig& cfg) {
  auto img = image_from_compressed(accel_compressed(segment_values, cfg), stats, Compression::sqrt, cfg.per_image_norm);
  img.freq_axis = FreqAxis::linear_hz;
  img.units_per_row = cfg.accel_rate_hz / 2.0 / static_cast<double>(cfg.image_size - 1);
  img.seconds_per_col = cfg.frame_seconds();
  return img;
}

inline MelFilterbank audio_filterbank(const SpectralConfig& cfg) {
  return build_mel_filterbank(cfg.mel_bins, cfg.audio_n_fft, cfg.audio_rate_hz, cfg.mel_fmin_hz, cfg.mel_fmax_hz);
}

/// log1p mel magnitudes cropped to image geometry, before scaling.
inline Matrix audio_compressed(std::span<const double> segment_values, const SpectralConfig& cfg,
                               const MelFilterbank& fb) {
  const auto spec = stft(segment_values, cfg.audio_rate_hz, cfg.audio_n_fft, cfg.audio_hop());
  return fit_to_image(compress(linear_to_mel(spec.magnitude(), fb), Compression::log1p), cfg.image_size);
}

inline SpectroImage audio_to_mel(std::span<const double> segment_values, const NormStats& stats,
                                 const SpectralConfig& cfg, const MelFilterbank& fb) {
  auto img = image_from_compressed(audio_compressed(segment_values, cfg, fb), stats, Compression::log1p, false);
  img.freq_axis = FreqAxis::mel;
  img.units_per_row = (hz_to_mel(cfg.mel_fmax_hz) - hz_to_mel(cfg.mel_fmin_hz)) / static_cast<double>(cfg.mel_bins + 1);
  img.seconds_per_col = static_cast<double>(cfg.audio_hop()) / cfg.audio_rate_hz;
  return img;
}

inline SpectroImage audio_to_mel(const UniformSeries& series, const NormStats& stats, const SpectralConfig& cfg) {
  if (std::abs(series.rate_hz - cfg.audio_rate_hz) > 1e-9) throw InputError("audio is not at the configured rate");
  return audio_to_mel(series.values, stats, cfg, audio_filterbank(cfg));
}

/// Generated mel image back to linear magnitudes (bins x image_size frames).
inline Matrix mel_image_to_linear(const Matrix& pixels, const NormStats& target_stats, const MelInverter& inv) {
  return inv(decompress(denormalize(pixels, target_stats), Compression::log1p));
}

}  // namespace accear
