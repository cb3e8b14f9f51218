#pragma once

#include <cmath>
#include <vector>

#include "tnanet/tensor.hpp"

namespace tnanet {

/// Adam moments for one ParamSet, keyed by registration order.
struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  AdamState() = default;
  explicit AdamState(const ParamSet& params, double learning_rate = 0.001) : lr(learning_rate) {
    m.reserve(params.size());
    v.reserve(params.size());
    for (const auto& e : params) {
      m.emplace_back(e.param->value.shape(), 0.0);
      v.emplace_back(e.param->value.shape(), 0.0);
    }
  }
};

/// One bias-corrected Adam update; gradients are zeroed afterwards.
inline void adam_step(const ParamSet& params, AdamState& state) {
  if (state.m.size() != params.size()) {
    throw DimensionError(detail::concat("adam_step: optimizer tracks ", state.m.size(), " parameters, set has ",
                                        params.size()));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k].param;
    require_shape(state.m[k], p.value.shape(), "adam_step moment");
    double* w = p.value.data();
    double* g = p.grad.data();
    double* m = state.m[k].data();
    double* v = state.v[k].data();
    const std::size_t n = p.value.size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
      g[i] = 0.0;
    }
  }
}

}  // namespace tnanet
