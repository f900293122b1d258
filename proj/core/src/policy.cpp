// SPDX-License-Identifier: Apache-2.0
#include "mmrf/policy.hpp"

#include <bit>
#include <cstring>

namespace mmrf {

namespace {

std::uint64_t state_hash(std::span<const float> state) {
  return Rng::hash_bytes(std::as_bytes(state));
}

}  // namespace

std::vector<float> RandomPolicy::scores(std::span<const float> state, std::span<const std::int64_t> pool_ids,
                                        const Tensor& pool_features) const {
  (void)pool_features;
  const std::uint64_t key = Rng::mix(seed_ ^ state_hash(state));
  std::vector<float> out;
  out.reserve(pool_ids.size());
  for (auto id : pool_ids) {
    Rng r(key ^ Rng::mix(static_cast<std::uint64_t>(id) + 0x9e3779b97f4a7c15ULL));
    out.push_back(static_cast<float>(r.normal()));
  }
  return out;
}

std::vector<float> HeuristicPolicy::scores(std::span<const float> state, std::span<const std::int64_t> pool_ids,
                                           const Tensor& pool_features) const {
  if (static_cast<std::int64_t>(state.size()) < dim_ || pool_features.cols() != dim_) {
    throw DimensionError("heuristic policy: state or item features narrower than d");
  }
  std::vector<float> out = random_.scores(state, pool_ids, pool_features);
  for (std::int64_t r = 0; r < pool_features.rows(); ++r) {
    auto v = pool_features.row_span(r);
    double dot = 0.0;
    for (std::int64_t c = 0; c < dim_; ++c) dot += static_cast<double>(state[static_cast<std::size_t>(c)]) * v[static_cast<std::size_t>(c)];
    auto& s = out[static_cast<std::size_t>(r)];
    s = static_cast<float>(gain_ * dot + noise_ * s);
  }
  return out;
}

std::vector<float> AgentPolicy::scores(std::span<const float> state, std::span<const std::int64_t> pool_ids,
                                       const Tensor& pool_features) const {
  (void)pool_ids;
  const JointAction ja = act(*bundle_, state, bundle_->config().collab);
  return score_items(ja.main, pool_features);
}

std::vector<double> BCPolicy::query(std::span<const float> state) const {
  if (static_cast<std::int64_t>(state.size()) + 1 != weight_.cols()) {
    throw DimensionError("bc policy: state width " + std::to_string(state.size()) + " does not match weight " +
                         shape_str(weight_.shape()));
  }
  std::vector<double> q(static_cast<std::size_t>(weight_.rows()), 0.0);
  for (std::int64_t r = 0; r < weight_.rows(); ++r) {
    double acc = weight_.at(r, weight_.cols() - 1);
    for (std::size_t c = 0; c < state.size(); ++c) acc += weight_.at(r, static_cast<std::int64_t>(c)) * state[c];
    q[static_cast<std::size_t>(r)] = acc;
  }
  return q;
}

std::vector<float> BCPolicy::scores(std::span<const float> state, std::span<const std::int64_t> pool_ids,
                                    const Tensor& pool_features) const {
  (void)pool_ids;
  const auto q = query(state);
  if (pool_features.cols() != static_cast<std::int64_t>(q.size())) throw DimensionError("bc policy: item width");
  std::vector<float> out(static_cast<std::size_t>(pool_features.rows()));
  for (std::int64_t r = 0; r < pool_features.rows(); ++r) {
    auto v = pool_features.row_span(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < q.size(); ++c) acc += q[c] * v[c];
    out[static_cast<std::size_t>(r)] = static_cast<float>(acc);
  }
  return out;
}

}  // namespace mmrf
