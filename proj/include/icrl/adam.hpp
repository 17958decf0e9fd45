#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "icrl/tensor.hpp"

namespace icrl::nn {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

template <typename Real>
struct AdamState {
  std::vector<Tensor<Real>> m, v;
  int64_t step = 0;

  static AdamState init(const std::vector<Tensor<Real>>& params) {
    AdamState s;
    for (const auto& p : params) {
      s.m.push_back(Tensor<Real>::zeros(p.shape()));
      s.v.push_back(Tensor<Real>::zeros(p.shape()));
    }
    return s;
  }
};

/// Bias-corrected Adam, applied in place.
template <typename Real>
void adam_step(std::vector<Tensor<Real>>& params, const std::vector<Tensor<Real>>& grads,
               AdamState<Real>& state, const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
  ++state.step;
  const Real b1 = static_cast<Real>(cfg.beta1), b2 = static_cast<Real>(cfg.beta2);
  const Real bc1 = Real(1) - static_cast<Real>(std::pow(cfg.beta1, static_cast<double>(state.step)));
  const Real bc2 = Real(1) - static_cast<Real>(std::pow(cfg.beta2, static_cast<double>(state.step)));
  const Real lr = static_cast<Real>(cfg.lr), eps = static_cast<Real>(cfg.eps);
  for (size_t t = 0; t < params.size(); ++t) {
    if (!params[t].same_shape(grads[t]))
      throw ShapeError("adam_step: grad shape " + shape_str(grads[t].shape()) +
                       " != param shape " + shape_str(params[t].shape()));
    Real* p = params[t].data();
    const Real* g = grads[t].data();
    Real* m = state.m[t].data();
    Real* v = state.v[t].data();
    for (int64_t i = 0; i < params[t].size(); ++i) {
      m[i] = b1 * m[i] + (Real(1) - b1) * g[i];
      v[i] = b2 * v[i] + (Real(1) - b2) * g[i] * g[i];
      const Real mhat = m[i] / bc1;
      const Real vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace icrl::nn
