#include "graphdkl/optim.hpp"

#include <cmath>

#include "graphdkl/errors.hpp"

namespace graphdkl {

AdamState AdamState::zeros_like(const ParamSet& params) {
  return {params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, const AdamConfig& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params.at(i), grads.at(i), "adam_step gradient");
    require_same_shape(params.at(i), state.m.at(i), "adam_step first moment");
    require_same_shape(params.at(i), state.v.at(i), "adam_step second moment");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params.at(i).data();
    const auto g = grads.at(i).data();
    auto m = state.m.at(i).data();
    auto v = state.v.at(i).data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      p[k] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

}  // namespace graphdkl
