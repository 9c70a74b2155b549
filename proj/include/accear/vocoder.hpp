#pragma once

// Griffin-Lim phase retrieval and the generated-image -> waveform chain.

#include <accear/error.hpp>
#include <accear/spectral.hpp>

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace accear {

struct GriffinLimConfig {
  std::size_t iterations = 60;
  double momentum = 0.0;  // 0 = classic Griffin-Lim
  bool random_init = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (iterations == 0) throw ParameterError("Griffin-Lim needs at least one iteration");
    if (!(momentum >= 0.0) || momentum >= 1.0) throw ParameterError("momentum must be in [0, 1)");
  }
};

struct GriffinLimResult {
  UniformSeries audio;
  std::vector<double> error;  // relative consistency error after each iteration
};

/// Squared norm over the full two-sided spectrum, reconstructed from the
/// one-sided bins: every bin except DC and Nyquist appears twice.
inline double hermitian_weight(std::size_t k, std::size_t bins) { return (k == 0 || k + 1 == bins) ? 1.0 : 2.0; }

inline double consistency_error(const ComplexSpectrogram& x, const Matrix& magnitude) {
  double num = 0, den = 0;
  for (std::size_t t = 0; t < x.frames; ++t) {
    for (std::size_t k = 0; k < x.bins; ++k) {
      const double w = hermitian_weight(k, x.bins);
      const double d = std::abs(x.at(k, t)) - magnitude(k, t);
      num += w * d * d;
      den += w * magnitude(k, t) * magnitude(k, t);
    }
  }
  return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

/// Alternating projections between spectrograms with the given magnitude and
/// spectrograms of real signals. Frames are zero-padded at the edges so the
/// overlap-add inverse is the exact least-squares projection and the error
/// trace is non-increasing when momentum is 0.
inline GriffinLimResult griffin_lim(const Matrix& magnitude, double rate_hz, std::size_t n_fft, std::size_t hop,
                                    std::size_t signal_length, const GriffinLimConfig& cfg = {}) {
  cfg.validate();
  if (magnitude.rows != n_fft / 2 + 1) {
    throw ParameterError("magnitude has " + std::to_string(magnitude.rows) + " bins, n_fft " + std::to_string(n_fft) +
                         " needs " + std::to_string(n_fft / 2 + 1));
  }
  if (hop == 0 || hop > n_fft / 2) throw ParameterError("hop must be in (0, n_fft/2] for overlap-add");
  if (signal_length < n_fft) throw ParameterError("signal shorter than one frame");
  const std::size_t frames = stft_frame_count(signal_length, hop);
  if (magnitude.cols != frames) {
    throw ParameterError("magnitude has " + std::to_string(magnitude.cols) + " frames, expected " + std::to_string(frames));
  }
  for (double v : magnitude.data) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InputError("magnitude must be finite and non-negative");
  }

  ComplexSpectrogram spec;
  spec.bins = magnitude.rows;
  spec.frames = frames;
  spec.rate_hz = rate_hz;
  spec.n_fft = n_fft;
  spec.hop = hop;
  spec.signal_length = signal_length;
  spec.pad = PadMode::zero;
  spec.data.resize(spec.bins * frames);

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> phase(-std::numbers::pi, std::numbers::pi);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t k = 0; k < spec.bins; ++k) {
      spec.at(k, t) = cfg.random_init ? std::polar(magnitude(k, t), phase(rng)) : cplx(magnitude(k, t), 0.0);
    }
  }

  GriffinLimResult result;
  ComplexSpectrogram previous;
  UniformSeries audio;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    audio = istft(spec);
    ComplexSpectrogram rebuilt = stft(audio.values, rate_hz, n_fft, hop, PadMode::zero);
    result.error.push_back(consistency_error(rebuilt, magnitude));

    ComplexSpectrogram target = rebuilt;
    if (cfg.momentum > 0.0 && !previous.data.empty()) {
      for (std::size_t i = 0; i < target.data.size(); ++i) {
        target.data[i] = rebuilt.data[i] + cfg.momentum * (rebuilt.data[i] - previous.data[i]);
      }
    }
    previous = std::move(rebuilt);
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t k = 0; k < spec.bins; ++k) {
        const cplx z = target.at(k, t);
        const double a = std::abs(z);
        spec.at(k, t) = a > 0 ? z * (magnitude(k, t) / a) : cplx(magnitude(k, t), 0.0);
      }
    }
  }
  result.audio = istft(spec);
  return result;
}

/// Time-axis resampling of a magnitude spectrogram whose hop is too coarse for
/// overlap-add: `factor` new frames per original hop, linearly interpolated,
/// trailing frames holding the last column.
inline Matrix upsample_frames(const Matrix& m, std::size_t factor, std::size_t frames_out) {
  if (factor == 0 || m.cols == 0) throw ParameterError("bad upsampling request");
  Matrix out(m.rows, frames_out);
  for (std::size_t j = 0; j < frames_out; ++j) {
    const double pos = static_cast<double>(j) / static_cast<double>(factor);
    const auto lo = std::min(static_cast<std::size_t>(pos), m.cols - 1);
    const std::size_t hi = std::min(lo + 1, m.cols - 1);
    const double f = lo + 1 < m.cols ? pos - static_cast<double>(lo) : 0.0;
    for (std::size_t k = 0; k < m.rows; ++k) out(k, j) = (1.0 - f) * m(k, lo) + f * m(k, hi);
  }
  return out;
}

/// Smallest divisor r of `hop` with hop / r <= n_fft / 4.
inline std::size_t synthesis_factor(std::size_t hop, std::size_t n_fft) {
  const std::size_t limit = std::max<std::size_t>(1, n_fft / 4);
  for (std::size_t r = (hop + limit - 1) / limit; r <= hop; ++r) {
    if (r >= 1 && hop % r == 0) return r;
  }
  return hop;
}

/// Linear magnitudes on the image grid (bins x image_size columns, column t at
/// t * audio_hop) to a waveform of exactly one segment.
inline GriffinLimResult vocode_linear(const Matrix& linear, const SpectralConfig& sc, const GriffinLimConfig& gl = {}) {
  const std::size_t hop = sc.audio_hop();
  const std::size_t r = synthesis_factor(hop, sc.audio_n_fft);
  const std::size_t fine_hop = hop / r;
  const std::size_t length = sc.audio_segment_samples();
  const Matrix fine = upsample_frames(linear, r, stft_frame_count(length, fine_hop));
  auto out = griffin_lim(fine, sc.audio_rate_hz, sc.audio_n_fft, fine_hop, length, gl);
  out.audio.values.resize(length, 0.0);
  return out;
}

/// Generated [0, 1] mel image -> waveform: undo scaling and log1p, invert the
/// filterbank, then Griffin-Lim.
inline GriffinLimResult vocode_image(const Matrix& pixels, const NormStats& target_stats, const SpectralConfig& sc,
                                     const MelInverter& inverter, const GriffinLimConfig& gl = {}) {
  return vocode_linear(mel_image_to_linear(pixels, target_stats, inverter), sc, gl);
}

}  // namespace accear
