#pragma once

// Dense kernels behind the convolution operators. Loop orders are fixed so
// results are bit-reproducible; innermost loops run over contiguous memory.

#include <cstddef>
#include <vector>

namespace accear::ad::kernels {

/// C (m x n) += A (m x k) * B (k x n), all row-major and dense.
template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = arow[p];
      if (aip == T(0)) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

/// C (m x n) += A^T * B with A stored (k x m) and B stored (k x n).
template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = a + p * m;
    const T* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T api = arow[i];
      if (api == T(0)) continue;
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

/// out (cols x rows) = in (rows x cols)^T
template <class T>
void transpose(std::size_t rows, std::size_t cols, const T* in, T* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = in[r * cols + c];
  }
}

/// Geometry of a strided, zero-padded square-kernel window over one image.
struct Window {
  std::size_t channels, height, width;  // image
  std::size_t kernel, stride, pad;
  std::size_t out_h, out_w;             // window grid

  std::size_t rows() const { return channels * kernel * kernel; }
  std::size_t cols() const { return out_h * out_w; }
};

/// cols (C*k*k x Ho*Wo) gathered from image (C x H x W).
template <class T>
void im2col(const Window& g, const T* image, T* cols) {
  const std::size_t ncols = g.cols();
  for (std::size_t ch = 0; ch < g.channels; ++ch) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        T* dst = cols + ((ch * g.kernel + ki) * g.kernel + kj) * ncols;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          T* drow = dst + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) {
            for (std::size_t ow = 0; ow < g.out_w; ++ow) drow[ow] = T(0);
            continue;
          }
          const T* src = image + (ch * g.height + static_cast<std::size_t>(ih)) * g.width;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            drow[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.width)) ? T(0) : src[iw];
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatter-adds cols back into image (C x H x W).
template <class T>
void col2im(const Window& g, const T* cols, T* image) {
  const std::size_t ncols = g.cols();
  for (std::size_t ch = 0; ch < g.channels; ++ch) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const T* src = cols + ((ch * g.kernel + ki) * g.kernel + kj) * ncols;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) continue;
          T* dst = image + (ch * g.height + static_cast<std::size_t>(ih)) * g.width;
          const T* srow = src + oh * g.out_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.width)) dst[iw] += srow[ow];
          }
        }
      }
    }
  }
}

}  // namespace accear::ad::kernels
