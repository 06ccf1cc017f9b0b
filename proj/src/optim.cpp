#include "dfrd/optim.hpp"

#include <cmath>

namespace dfrd {

namespace {

const Tensor& grad_for(const GradientMap& grads, const std::string& name, const Tensor& param) {
  auto it = grads.find(name);
  require(it != grads.end(), "missing gradient for parameter '" + name + "'");
  require(it->second.same_shape(param), "gradient shape mismatch for parameter '" + name + "'");
  return it->second;
}

}  // namespace

ParameterSet sgd_step(ParameterSet params, const GradientMap& grads, double lr) {
  require(lr > 0.0, "learning rate must be positive");
  for (auto& [name, p] : params) {
    const Tensor& g = grad_for(grads, name, p);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
  }
  return params;
}

AdamState AdamState::for_params(const ParameterSet& params, double lr, double b1, double b2,
                                BiasCorrection correction) {
  require(lr > 0.0, "learning rate must be positive");
  require(b1 > 0.0 && b1 < 1.0 && b2 > 0.0 && b2 < 1.0, "moment decay rates must lie in (0,1)");
  AdamState s;
  s.m = zeros_like(params);
  s.v = zeros_like(params);
  s.b1 = b1;
  s.b2 = b2;
  s.lr = lr;
  s.correction = correction;
  return s;
}

void AdamState::reset() {
  for (auto& [_, t] : m) t.fill(0.0);
  for (auto& [_, t] : v) t.fill(0.0);
  step = 0;
}

void adam_step_literal(AdamState& state, ParameterSet& params, const GradientMap& grads) {
  require(state.m.same_layout(params) && state.v.same_layout(params), "optimizer state does not match parameters");
  ++state.step;
  double c1 = 1.0 - state.b1;
  double c2 = 1.0 - state.b2;
  if (state.correction == BiasCorrection::kStepPowered) {
    c1 = 1.0 - std::pow(state.b1, state.step);
    c2 = 1.0 - std::pow(state.b2, state.step);
  }
  for (auto& [name, p] : params) {
    const Tensor& g = grad_for(grads, name, p);
    Tensor& m = state.m.at(name);
    Tensor& v = state.v.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.b1 * m[i] + (1.0 - state.b1) * g[i];
      v[i] = state.b2 * v[i] + (1.0 - state.b2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

}  // namespace dfrd
