#pragma once

#include <accear/autodiff/tensor.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

namespace accear::ad {

struct AdamHyper {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t step = 0;

  void ensure(const std::vector<Parameter<T>*>& params) {
    if (m.size() == params.size()) return;
    m.clear();
    v.clear();
    for (const auto* p : params) {
      m.emplace_back(p->value.shape);
      v.emplace_back(p->value.shape);
    }
  }
};

/// Bias-corrected Adam. Moments are kept in T; the bias corrections in double.
template <class T>
void adam_step(const std::vector<Parameter<T>*>& params, AdamState<T>& state, const AdamHyper& h) {
  state.ensure(params);
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  const T b1 = static_cast<T>(h.beta1), b2 = static_cast<T>(h.beta2);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    if (p.grad.data.size() != p.value.data.size()) throw ShapeError("adam: gradient shape mismatch for " + p.name);
    auto& m = state.m[k].data;
    auto& v = state.v[k].data;
    for (std::size_t i = 0; i < p.value.data.size(); ++i) {
      const T g = p.grad.data[i];
      m[i] = b1 * m[i] + (T(1) - b1) * g;
      v[i] = b2 * v[i] + (T(1) - b2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.value.data[i] -= static_cast<T>(h.lr * mhat / (std::sqrt(vhat) + h.eps));
    }
  }
}

/// Plain gradient descent: theta <- theta - lr * grad.
template <class T>
void sgd_step(const std::vector<Parameter<T>*>& params, double lr) {
  for (auto* p : params) {
    if (p->grad.data.size() != p->value.data.size()) throw ShapeError("sgd: gradient shape mismatch for " + p->name);
    for (std::size_t i = 0; i < p->value.data.size(); ++i) p->value.data[i] -= static_cast<T>(lr * p->grad.data[i]);
  }
}

template <class T>
void zero_grads(const std::vector<Parameter<T>*>& params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace accear::ad
