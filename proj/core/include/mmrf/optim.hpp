// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "mmrf/param_store.hpp"

namespace mmrf {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moments for one parameter group. The keys of `m` define the group.
struct AdamState {
  std::int64_t t = 0;
  ParamStore m;
  ParamStore v;

  /// Zeroed moments for every entry of `store` whose name has `prefix`.
  static AdamState for_prefix(const ParamStore& store, const std::string& prefix);
  static AdamState for_names(const ParamStore& store, const std::vector<std::string>& names);

  bool operator==(const AdamState&) const = default;
};

/// Named optimizer groups, persisted alongside parameters.
struct OptState {
  std::map<std::string, AdamState> groups;
  bool operator==(const OptState&) const = default;
};

/// One bias-corrected Adam step over the group in `state`. Every group
/// member needs an entry in `grads`; a missing one raises ContractError
/// naming it. When the group is empty it is initialised from all of `store`.
void adam_step(ParamStore& store, const GradStore& grads, AdamState& state, double lr,
               const AdamConfig& config = {});

/// Global L2 norm over the named subset of `grads` (all when `prefix` empty).
double grad_norm(const GradStore& grads, const std::string& prefix = "");

}  // namespace mmrf
