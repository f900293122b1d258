// SPDX-License-Identifier: Apache-2.0
#include "mmrf/optim.hpp"

#include <cmath>

namespace mmrf {

AdamState AdamState::for_prefix(const ParamStore& store, const std::string& prefix) {
  AdamState s;
  for (const auto& [name, t] : store) {
    if (!starts_with(name, prefix)) continue;
    s.m.set(name, Tensor(t.shape()));
    s.v.set(name, Tensor(t.shape()));
  }
  return s;
}

AdamState AdamState::for_names(const ParamStore& store, const std::vector<std::string>& names) {
  AdamState s;
  for (const auto& name : names) {
    const Tensor& t = store.at(name);
    s.m.set(name, Tensor(t.shape()));
    s.v.set(name, Tensor(t.shape()));
  }
  return s;
}

void adam_step(ParamStore& store, const GradStore& grads, AdamState& state, double lr, const AdamConfig& config) {
  if (state.m.empty()) state = AdamState::for_prefix(store, "");
  for (const auto& [name, _] : state.m) {
    if (grads.find(name) == grads.end()) throw ContractError("adam_step: missing gradient for '" + name + "'");
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  for (auto& [name, m] : state.m) {
    Tensor& v = state.v.at(name);
    Tensor& p = store.at(name);
    const Tensor64& g = grads.find(name)->second;
    if (g.numel() != p.numel()) {
      throw DimensionError("adam_step: gradient " + shape_str(g.shape()) + " for '" + name +
                           "' does not match parameter " + shape_str(p.shape()));
    }
    for (std::int64_t i = 0; i < p.numel(); ++i) {
      const double gi = g[i];
      const double mi = config.beta1 * m[i] + (1.0 - config.beta1) * gi;
      const double vi = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double step = lr * (mi / bc1) / (std::sqrt(vi / bc2) + config.eps);
      p[i] = static_cast<float>(p[i] - step);
    }
  }
}

double grad_norm(const GradStore& grads, const std::string& prefix) {
  double acc = 0.0;
  for (const auto& [name, g] : grads) {
    if (!starts_with(name, prefix)) continue;
    for (double x : g.values()) acc += x * x;
  }
  return std::sqrt(acc);
}

}  // namespace mmrf
