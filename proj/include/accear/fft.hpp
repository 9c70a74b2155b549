#pragma once

#include <accear/error.hpp>

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

namespace accear {

using cplx = std::complex<double>;

inline bool is_power_of_two(std::size_t n) { return n >= 1 && (n & (n - 1)) == 0; }

/// Iterative radix-2 FFT with precomputed twiddles and bit-reversal table.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n) : n_(n) {
    if (!is_power_of_two(n)) throw ParameterError("FFT size must be a power of two");
    rev_.resize(n);
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1U) << (bits - 1 - b);
      rev_[i] = r;
    }
    twiddle_.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      twiddle_[k] = {std::cos(a), std::sin(a)};
    }
  }

  std::size_t size() const { return n_; }

  /// In place; `inverse` applies the conjugate kernel and the 1/n scale.
  void transform(std::span<cplx> data, bool inverse = false) const {
    if (data.size() != n_) throw ShapeError("FFT buffer size mismatch");
    for (std::size_t i = 0; i < n_; ++i) {
      if (i < rev_[i]) std::swap(data[i], data[rev_[i]]);
    }
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t stride = n_ / len;
      for (std::size_t start = 0; start < n_; start += len) {
        for (std::size_t k = 0; k < half; ++k) {
          cplx w = twiddle_[k * stride];
          if (inverse) w = std::conj(w);
          const cplx u = data[start + k];
          const cplx v = data[start + k + half] * w;
          data[start + k] = u + v;
          data[start + k + half] = u - v;
        }
      }
    }
    if (inverse) {
      const double scale = 1.0 / static_cast<double>(n_);
      for (auto& v : data) v *= scale;
    }
  }

 private:
  std::size_t n_;
  std::vector<std::size_t> rev_;
  std::vector<cplx> twiddle_;
};

}  // namespace accear
