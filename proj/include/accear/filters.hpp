#pragma once

// IIR building blocks: Butterworth biquad cascades and zero-phase filtering.

#include <accear/error.hpp>

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace accear {

/// Normalized biquad (a0 == 1), run in transposed direct form II.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;

  double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }
};

using SosCascade = std::vector<Biquad>;

namespace detail {

// Q factors of the second-order sections of an even-order Butterworth prototype.
inline std::vector<double> butterworth_qs(int order) {
  if (order < 2 || order % 2 != 0) throw ParameterError("Butterworth order must be even and >= 2");
  std::vector<double> qs;
  for (int k = 1; k <= order / 2; ++k) {
    qs.push_back(1.0 / (2.0 * std::sin((2.0 * k - 1.0) * std::numbers::pi / (2.0 * order))));
  }
  return qs;
}

inline void check_cutoff(double cutoff_hz, double rate_hz) {
  if (!(rate_hz > 0)) throw ParameterError("sample rate must be positive");
  if (!(cutoff_hz > 0) || !(cutoff_hz < rate_hz / 2)) {
    throw ParameterError("cutoff " + std::to_string(cutoff_hz) + " Hz outside (0, Nyquist) for rate " +
                         std::to_string(rate_hz) + " Hz");
  }
}

}  // namespace detail

/// Bilinear-transform Butterworth high-pass, prewarped at the cutoff.
inline SosCascade butterworth_highpass(int order, double cutoff_hz, double rate_hz) {
  detail::check_cutoff(cutoff_hz, rate_hz);
  const double w0 = 2.0 * std::numbers::pi * cutoff_hz / rate_hz;
  const double cw = std::cos(w0);
  SosCascade sos;
  for (double q : detail::butterworth_qs(order)) {
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    sos.push_back({(1.0 + cw) / 2.0 / a0, -(1.0 + cw) / a0, (1.0 + cw) / 2.0 / a0, -2.0 * cw / a0,
                   (1.0 - alpha) / a0});
  }
  return sos;
}

inline SosCascade butterworth_lowpass(int order, double cutoff_hz, double rate_hz) {
  detail::check_cutoff(cutoff_hz, rate_hz);
  const double w0 = 2.0 * std::numbers::pi * cutoff_hz / rate_hz;
  const double cw = std::cos(w0);
  SosCascade sos;
  for (double q : detail::butterworth_qs(order)) {
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    sos.push_back({(1.0 - cw) / 2.0 / a0, (1.0 - cw) / a0, (1.0 - cw) / 2.0 / a0, -2.0 * cw / a0,
                   (1.0 - alpha) / a0});
  }
  return sos;
}

/// Magnitude response of a cascade at `freq_hz`.
inline double sos_gain(const SosCascade& sos, double freq_hz, double rate_hz) {
  const double w = 2.0 * std::numbers::pi * freq_hz / rate_hz;
  double gain = 1.0;
  for (const auto& s : sos) {
    // |B(e^jw)| / |A(e^jw)| with z^-1 = e^-jw
    const double br = s.b0 + s.b1 * std::cos(w) + s.b2 * std::cos(2 * w);
    const double bi = -s.b1 * std::sin(w) - s.b2 * std::sin(2 * w);
    const double ar = 1.0 + s.a1 * std::cos(w) + s.a2 * std::cos(2 * w);
    const double ai = -s.a1 * std::sin(w) - s.a2 * std::sin(2 * w);
    gain *= std::hypot(br, bi) / std::hypot(ar, ai);
  }
  return gain;
}

/// Causal filtering. When `settle_to_first` is set, each section starts in the
/// steady state for a constant input equal to the first sample.
inline std::vector<double> sosfilt(const SosCascade& sos, std::span<const double> x, bool settle_to_first = false) {
  std::vector<double> y(x.begin(), x.end());
  double level = x.empty() ? 0.0 : x.front();
  for (const auto& s : sos) {
    double z1 = 0, z2 = 0;
    if (settle_to_first) {
      const double out = s.dc_gain() * level;
      z2 = s.b2 * level - s.a2 * out;
      z1 = s.b1 * level - s.a1 * out + z2;
      level = out;
    }
    for (auto& v : y) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
  return y;
}

/// Forward-backward (zero-phase) filtering with odd-reflection edge extension.
/// The magnitude response is the square of the cascade's.
inline std::vector<double> sosfiltfilt(const SosCascade& sos, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  std::size_t pad = 3 * (2 * sos.size() + 1);
  if (pad >= n) pad = n - 1;

  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  auto fwd = sosfilt(sos, ext, true);
  std::vector<double> rev(fwd.rbegin(), fwd.rend());
  auto back = sosfilt(sos, rev, true);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = back[back.size() - 1 - pad - i];
  return out;
}

}  // namespace accear
