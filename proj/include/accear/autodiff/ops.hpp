#pragma once

// Differentiable operators over Graph<T>. Each computes its forward value
// eagerly and registers a backward closure when any input needs a gradient.

#include <accear/autodiff/graph.hpp>
#include <accear/autodiff/kernels.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace accear::ad {

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

namespace detail {

inline std::size_t conv_out_dim(std::size_t in, std::size_t k, const ConvGeometry& g) {
  if (in + 2 * g.pad < k) throw ShapeError("kernel larger than padded input");
  return (in + 2 * g.pad - k) / g.stride + 1;
}

inline std::size_t conv_transpose_out_dim(std::size_t in, std::size_t k, const ConvGeometry& g) {
  const std::size_t full = (in - 1) * g.stride + k;
  if (full < 2 * g.pad + 1) throw ShapeError("transposed convolution output would be empty");
  return full - 2 * g.pad;
}

template <class T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

template <class T>
bool any_requires_grad(std::initializer_list<Var<T>> vars) {
  for (const auto& v : vars) {
    if (v.valid() && v.requires_grad()) return true;
  }
  return false;
}

}  // namespace detail

/// Cross-correlation; weight (out_ch, in_ch, k, k), optional bias (1, out_ch, 1, 1).
template <class T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias, ConvGeometry geom) {
  Graph<T>& g = *x.graph;
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.c != xs.c) throw ShapeError("conv2d: input has " + std::to_string(xs.c) + " channels, weight expects " + std::to_string(ws.c));
  if (ws.h != ws.w) throw ShapeError("conv2d: kernel must be square");
  if (bias.valid() && bias.value().numel() != ws.n) throw ShapeError("conv2d: bias size mismatch");
  const std::size_t k = ws.h;
  const kernels::Window win{xs.c, xs.h, xs.w, k, geom.stride, geom.pad, detail::conv_out_dim(xs.h, k, geom),
                            detail::conv_out_dim(xs.w, k, geom)};
  const std::size_t cout = ws.n;
  const std::size_t p = win.cols();

  Tensor<T> out(Shape{xs.n, cout, win.out_h, win.out_w});
  std::vector<T> cols(win.rows() * p);
  const auto& xv = x.value();
  const auto& wv = weight.value();
  for (std::size_t n = 0; n < xs.n; ++n) {
    kernels::im2col(win, xv.sample(n), cols.data());
    T* o = out.sample(n);
    if (bias.valid()) {
      for (std::size_t co = 0; co < cout; ++co) std::fill(o + co * p, o + (co + 1) * p, bias.value().data[co]);
    }
    kernels::gemm_nn(cout, p, win.rows(), wv.data.data(), cols.data(), o);
  }

  const bool rg = detail::any_requires_grad<T>({x, weight, bias});
  return g.emit(std::move(out), rg, [x, weight, bias, win, cout, p](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& dy = gr.grad(self);
    const std::size_t nb = dy.shape.n;
    const std::size_t kk = win.rows();
    std::vector<T> cols(kk * p), cols_t(p * kk), dcols(kk * p);
    const auto& xv = gr.value(x.id);
    const auto& wv = gr.value(weight.id);
    for (std::size_t n = 0; n < nb; ++n) {
      const T* dyn = dy.sample(n);
      if (bias.valid() && gr.requires_grad(bias.id)) {
        auto& db = gr.grad(bias.id);
        for (std::size_t co = 0; co < cout; ++co) {
          T s = 0;
          for (std::size_t i = 0; i < p; ++i) s += dyn[co * p + i];
          db.data[co] += s;
        }
      }
      if (gr.requires_grad(weight.id)) {
        kernels::im2col(win, xv.sample(n), cols.data());
        kernels::transpose(kk, p, cols.data(), cols_t.data());
        kernels::gemm_nn(cout, kk, p, dyn, cols_t.data(), gr.grad(weight.id).data.data());
      }
      if (gr.requires_grad(x.id)) {
        std::fill(dcols.begin(), dcols.end(), T(0));
        kernels::gemm_tn(kk, p, cout, wv.data.data(), dyn, dcols.data());
        kernels::col2im(win, dcols.data(), gr.grad(x.id).sample(n));
      }
    }
  });
}

/// Adjoint of conv2d in the input; weight (in_ch, out_ch, k, k) so the same
/// tensor serves a conv2d and its transpose.
template <class T>
Var<T> conv_transpose2d(Var<T> x, Var<T> weight, Var<T> bias, ConvGeometry geom) {
  Graph<T>& g = *x.graph;
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.n != xs.c) throw ShapeError("conv_transpose2d: input has " + std::to_string(xs.c) + " channels, weight expects " + std::to_string(ws.n));
  if (ws.h != ws.w) throw ShapeError("conv_transpose2d: kernel must be square");
  const std::size_t cout = ws.c;
  if (bias.valid() && bias.value().numel() != cout) throw ShapeError("conv_transpose2d: bias size mismatch");
  const std::size_t k = ws.h;
  const std::size_t oh = detail::conv_transpose_out_dim(xs.h, k, geom);
  const std::size_t ow = detail::conv_transpose_out_dim(xs.w, k, geom);
  // Window over the *output* image whose grid is the input.
  const kernels::Window win{cout, oh, ow, k, geom.stride, geom.pad, xs.h, xs.w};
  if (detail::conv_out_dim(oh, k, geom) != xs.h || detail::conv_out_dim(ow, k, geom) != xs.w) {
    throw ShapeError("conv_transpose2d: geometry is not invertible");
  }
  const std::size_t pin = xs.h * xs.w;
  const std::size_t kk = win.rows();

  Tensor<T> out(Shape{xs.n, cout, oh, ow});
  std::vector<T> cols(kk * pin);
  const auto& xv = x.value();
  const auto& wv = weight.value();
  for (std::size_t n = 0; n < xs.n; ++n) {
    std::fill(cols.begin(), cols.end(), T(0));
    kernels::gemm_tn(kk, pin, xs.c, wv.data.data(), xv.sample(n), cols.data());
    T* o = out.sample(n);
    kernels::col2im(win, cols.data(), o);
    if (bias.valid()) {
      for (std::size_t co = 0; co < cout; ++co) {
        const T b = bias.value().data[co];
        for (std::size_t i = 0; i < oh * ow; ++i) o[co * oh * ow + i] += b;
      }
    }
  }

  const bool rg = detail::any_requires_grad<T>({x, weight, bias});
  const std::size_t cin = xs.c;
  return g.emit(std::move(out), rg, [x, weight, bias, win, cin, cout, pin, kk](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& dy = gr.grad(self);
    const std::size_t plane = win.height * win.width;
    std::vector<T> dcols(kk * pin), dcols_t(pin * kk);
    const auto& xv = gr.value(x.id);
    const auto& wv = gr.value(weight.id);
    for (std::size_t n = 0; n < dy.shape.n; ++n) {
      const T* dyn = dy.sample(n);
      if (bias.valid() && gr.requires_grad(bias.id)) {
        auto& db = gr.grad(bias.id);
        for (std::size_t co = 0; co < cout; ++co) {
          T s = 0;
          for (std::size_t i = 0; i < plane; ++i) s += dyn[co * plane + i];
          db.data[co] += s;
        }
      }
      const bool need_w = gr.requires_grad(weight.id);
      const bool need_x = gr.requires_grad(x.id);
      if (!need_w && !need_x) continue;
      kernels::im2col(win, dyn, dcols.data());
      if (need_x) kernels::gemm_nn(cin, pin, kk, wv.data.data(), dcols.data(), gr.grad(x.id).sample(n));
      if (need_w) {
        kernels::transpose(kk, pin, dcols.data(), dcols_t.data());
        kernels::gemm_nn(cin, kk, pin, xv.sample(n), dcols_t.data(), gr.grad(weight.id).data.data());
      }
    }
  });
}

enum class Activation { leaky_relu, relu, tanh, sigmoid };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

inline constexpr double kLeakySlope = 0.2;

template <class T>
Var<T> activation(Activation kind, Var<T> x) {
  Graph<T>& g = *x.graph;
  Tensor<T> out = x.value();
  const T slope = static_cast<T>(kLeakySlope);
  for (auto& v : out.data) {
    switch (kind) {
      case Activation::leaky_relu: v = v > T(0) ? v : slope * v; break;
      case Activation::relu: v = v > T(0) ? v : T(0); break;
      case Activation::tanh: v = std::tanh(v); break;
      case Activation::sigmoid: v = T(1) / (T(1) + std::exp(-v)); break;
    }
  }
  return g.emit(std::move(out), x.requires_grad(), [x, kind, slope](Graph<T>& gr, std::size_t self) {
    const auto& dy = gr.grad(self).data;
    const auto& in = gr.value(x.id).data;
    const auto& y = gr.value(self).data;
    auto& dx = gr.grad(x.id).data;
    for (std::size_t i = 0; i < dy.size(); ++i) {
      T d = 0;
      switch (kind) {
        case Activation::leaky_relu: d = in[i] > T(0) ? T(1) : slope; break;
        case Activation::relu: d = in[i] > T(0) ? T(1) : T(0); break;
        case Activation::tanh: d = T(1) - y[i] * y[i]; break;
        case Activation::sigmoid: d = y[i] * (T(1) - y[i]); break;
      }
      dx[i] += dy[i] * d;
    }
  });
}

template <class T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
  Graph<T>& g = *a.graph;
  const Shape as = a.shape(), bs = b.shape();
  if (as.n != bs.n || as.h != bs.h || as.w != bs.w) throw ShapeError("concat: " + as.str() + " vs " + bs.str());
  Tensor<T> out(Shape{as.n, as.c + bs.c, as.h, as.w});
  const std::size_t pa = as.c * as.plane(), pb = bs.c * bs.plane();
  for (std::size_t n = 0; n < as.n; ++n) {
    std::copy(a.value().sample(n), a.value().sample(n) + pa, out.sample(n));
    std::copy(b.value().sample(n), b.value().sample(n) + pb, out.sample(n) + pa);
  }
  const bool rg = detail::any_requires_grad<T>({a, b});
  return g.emit(std::move(out), rg, [a, b, pa, pb](Graph<T>& gr, std::size_t self) {
    const auto& dy = gr.grad(self);
    for (std::size_t n = 0; n < dy.shape.n; ++n) {
      const T* src = dy.sample(n);
      if (gr.requires_grad(a.id)) {
        T* da = gr.grad(a.id).sample(n);
        for (std::size_t i = 0; i < pa; ++i) da[i] += src[i];
      }
      if (gr.requires_grad(b.id)) {
        T* db = gr.grad(b.id).sample(n);
        for (std::size_t i = 0; i < pb; ++i) db[i] += src[pa + i];
      }
    }
  });
}

/// Per-channel running statistics for inference-mode normalization.
struct RunningStats {
  std::vector<double> mean;
  std::vector<double> var;
  double momentum = 0.1;

  explicit RunningStats(std::size_t channels = 0) : mean(channels, 0.0), var(channels, 1.0) {}
};

enum class NormMode { training, inference };

inline constexpr double kBatchNormEps = 1e-5;

/// Batch normalization over (batch, height, width). In training mode the
/// batch statistics are used and, when `running` is given, folded into it.
template <class T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, NormMode mode, RunningStats* running = nullptr) {
  Graph<T>& g = *x.graph;
  const Shape s = x.shape();
  if (gamma.value().numel() != s.c || beta.value().numel() != s.c) throw ShapeError("batch_norm: affine size mismatch");
  const std::size_t plane = s.plane();
  const double count = static_cast<double>(s.n * plane);
  const auto& xv = x.value();

  std::vector<double> mean(s.c, 0.0), inv_std(s.c, 0.0);
  if (mode == NormMode::training) {
    for (std::size_t c = 0; c < s.c; ++c) {
      double sum = 0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* p = xv.sample(n) + c * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      const double mu = sum / count;
      double sq = 0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* p = xv.sample(n) + c * plane;
        for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mu) * (p[i] - mu);
      }
      const double var = sq / count;
      mean[c] = mu;
      inv_std[c] = 1.0 / std::sqrt(var + kBatchNormEps);
      if (running != nullptr) {
        if (running->mean.size() != s.c) *running = RunningStats(s.c);
        const double unbiased = count > 1 ? sq / (count - 1) : var;
        running->mean[c] = (1 - running->momentum) * running->mean[c] + running->momentum * mu;
        running->var[c] = (1 - running->momentum) * running->var[c] + running->momentum * unbiased;
      }
    }
  } else {
    if (running == nullptr || running->mean.size() != s.c) throw ShapeError("batch_norm: inference mode needs running stats");
    for (std::size_t c = 0; c < s.c; ++c) {
      mean[c] = running->mean[c];
      inv_std[c] = 1.0 / std::sqrt(running->var[c] + kBatchNormEps);
    }
  }

  Tensor<T> xhat(s);
  Tensor<T> out(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const T* p = xv.sample(n) + c * plane;
      T* h = xhat.sample(n) + c * plane;
      T* o = out.sample(n) + c * plane;
      const T ga = gamma.value().data[c], be = beta.value().data[c];
      for (std::size_t i = 0; i < plane; ++i) {
        h[i] = static_cast<T>((p[i] - mean[c]) * inv_std[c]);
        o[i] = ga * h[i] + be;
      }
    }
  }

  const bool rg = detail::any_requires_grad<T>({x, gamma, beta});
  return g.emit(std::move(out), rg,
                [x, gamma, beta, mode, xhat = std::move(xhat), inv_std, plane, count](Graph<T>& gr, std::size_t self) {
                  const auto& dy = gr.grad(self);
                  const Shape s = dy.shape;
                  for (std::size_t c = 0; c < s.c; ++c) {
                    double sum_dy = 0, sum_dy_xhat = 0;
                    for (std::size_t n = 0; n < s.n; ++n) {
                      const T* d = dy.sample(n) + c * plane;
                      const T* h = xhat.sample(n) + c * plane;
                      for (std::size_t i = 0; i < plane; ++i) {
                        sum_dy += d[i];
                        sum_dy_xhat += d[i] * h[i];
                      }
                    }
                    if (gr.requires_grad(gamma.id)) gr.grad(gamma.id).data[c] += static_cast<T>(sum_dy_xhat);
                    if (gr.requires_grad(beta.id)) gr.grad(beta.id).data[c] += static_cast<T>(sum_dy);
                    if (!gr.requires_grad(x.id)) continue;
                    const double scale = gr.value(gamma.id).data[c] * inv_std[c];
                    const double mdy = sum_dy / count, mdyh = sum_dy_xhat / count;
                    for (std::size_t n = 0; n < s.n; ++n) {
                      const T* d = dy.sample(n) + c * plane;
                      const T* h = xhat.sample(n) + c * plane;
                      T* dx = gr.grad(x.id).sample(n) + c * plane;
                      for (std::size_t i = 0; i < plane; ++i) {
                        dx[i] += mode == NormMode::training ? static_cast<T>(scale * (d[i] - mdy - h[i] * mdyh))
                                                            : static_cast<T>(scale * d[i]);
                      }
                    }
                  }
                });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  if (!(a.shape() == b.shape())) throw ShapeError("add: " + a.shape().str() + " vs " + b.shape().str());
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.value().data[i];
  const bool rg = detail::any_requires_grad<T>({a, b});
  return a.graph->emit(std::move(out), rg, [a, b](Graph<T>& gr, std::size_t self) {
    if (gr.requires_grad(a.id)) detail::accumulate(gr.grad(a.id), gr.grad(self));
    if (gr.requires_grad(b.id)) detail::accumulate(gr.grad(b.id), gr.grad(self));
  });
}

template <class T>
Var<T> scale(Var<T> a, T factor) {
  Tensor<T> out = a.value();
  for (auto& v : out.data) v *= factor;
  return a.graph->emit(std::move(out), a.requires_grad(), [a, factor](Graph<T>& gr, std::size_t self) {
    auto& da = gr.grad(a.id).data;
    const auto& dy = gr.grad(self).data;
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += factor * dy[i];
  });
}

template <class T>
Var<T> mean(Var<T> a) {
  const auto& v = a.value().data;
  double s = 0;
  for (const T& x : v) s += x;
  const double n = static_cast<double>(v.size());
  return a.graph->emit(Tensor<T>::scalar(static_cast<T>(s / n)), a.requires_grad(), [a, n](Graph<T>& gr, std::size_t self) {
    const T d = static_cast<T>(gr.grad(self).data[0] / n);
    for (auto& x : gr.grad(a.id).data) x += d;
  });
}

/// Weighted sum of all elements with constant weights; handy for probing
/// arbitrary upstream gradients.
template <class T>
Var<T> dot_constant(Var<T> a, const Tensor<T>& weights) {
  if (!(a.shape() == weights.shape)) throw ShapeError("dot_constant shape mismatch");
  double s = 0;
  for (std::size_t i = 0; i < weights.data.size(); ++i) s += static_cast<double>(a.value().data[i]) * weights.data[i];
  return a.graph->emit(Tensor<T>::scalar(static_cast<T>(s)), a.requires_grad(), [a, weights](Graph<T>& gr, std::size_t self) {
    const T d = gr.grad(self).data[0];
    auto& da = gr.grad(a.id).data;
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += d * weights.data[i];
  });
}

/// Mean absolute difference.
template <class T>
Var<T> l1_loss(Var<T> a, Var<T> b) {
  if (!(a.shape() == b.shape())) throw ShapeError("l1_loss: " + a.shape().str() + " vs " + b.shape().str());
  const auto& av = a.value().data;
  const auto& bv = b.value().data;
  double s = 0;
  for (std::size_t i = 0; i < av.size(); ++i) s += std::abs(static_cast<double>(av[i]) - bv[i]);
  const double n = static_cast<double>(av.size());
  const bool rg = detail::any_requires_grad<T>({a, b});
  return a.graph->emit(Tensor<T>::scalar(static_cast<T>(s / n)), rg, [a, b, n](Graph<T>& gr, std::size_t self) {
    const T d = static_cast<T>(gr.grad(self).data[0] / n);
    const auto& av = gr.value(a.id).data;
    const auto& bv = gr.value(b.id).data;
    const bool ga = gr.requires_grad(a.id), gb = gr.requires_grad(b.id);
    for (std::size_t i = 0; i < av.size(); ++i) {
      const T sgn = av[i] > bv[i] ? T(1) : (av[i] < bv[i] ? T(-1) : T(0));
      if (ga) gr.grad(a.id).data[i] += d * sgn;
      if (gb) gr.grad(b.id).data[i] -= d * sgn;
    }
  });
}

/// Mean binary cross-entropy between sigmoid(logits) and a constant label,
/// computed in the overflow-safe logit form.
template <class T>
Var<T> bce_with_logits(Var<T> logits, T label) {
  const auto& z = logits.value().data;
  double s = 0;
  for (const T& v : z) {
    const double zd = v;
    s += std::max(zd, 0.0) - zd * label + std::log1p(std::exp(-std::abs(zd)));
  }
  const double n = static_cast<double>(z.size());
  return logits.graph->emit(Tensor<T>::scalar(static_cast<T>(s / n)), logits.requires_grad(),
                            [logits, label, n](Graph<T>& gr, std::size_t self) {
                              const double d = gr.grad(self).data[0] / n;
                              const auto& z = gr.value(logits.id).data;
                              auto& dz = gr.grad(logits.id).data;
                              for (std::size_t i = 0; i < z.size(); ++i) {
                                const double sig = 1.0 / (1.0 + std::exp(-static_cast<double>(z[i])));
                                dz[i] += static_cast<T>(d * (sig - label));
                              }
                            });
}

}  // namespace accear::ad
