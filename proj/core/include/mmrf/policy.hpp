// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mmrf/agents.hpp"

namespace mmrf {

/// A ranking policy: one score per pool item, a pure function of the state
/// features and the pool.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual std::vector<float> scores(std::span<const float> state, std::span<const std::int64_t> pool_ids,
                                    const Tensor& pool_features) const = 0;
};

/// Standard-normal scores hashed from (seed, state, item id), so replaying
/// a logged request reproduces the logged scores exactly.
class RandomPolicy final : public Policy {
 public:
  explicit RandomPolicy(std::uint64_t seed = 0) : seed_(seed) {}
  std::string name() const override { return "random"; }
  std::vector<float> scores(std::span<const float> state, std::span<const std::int64_t> pool_ids,
                            const Tensor& pool_features) const override;

 private:
  std::uint64_t seed_;
};

/// Logging policy for offline datasets: gain * (profile . v) plus hashed
/// standard-normal noise of scale `noise`.
class HeuristicPolicy final : public Policy {
 public:
  HeuristicPolicy(std::int64_t dim, double gain = 4.0, double noise = 1.0, std::uint64_t seed = 0)
      : dim_(dim), gain_(gain), noise_(noise), random_(seed) {}
  std::string name() const override { return "heuristic"; }
  std::vector<float> scores(std::span<const float> state, std::span<const std::int64_t> pool_ids,
                            const Tensor& pool_features) const override;

 private:
  std::int64_t dim_;
  double gain_;
  double noise_;
  RandomPolicy random_;
};

/// Scores from the main agent's action, without exploration noise.
class AgentPolicy final : public Policy {
 public:
  explicit AgentPolicy(std::shared_ptr<const AgentBundle> bundle) : bundle_(std::move(bundle)) {}
  std::string name() const override { return "checkpoint"; }
  std::vector<float> scores(std::span<const float> state, std::span<const std::int64_t> pool_ids,
                            const Tensor& pool_features) const override;
  const AgentBundle& bundle() const { return *bundle_; }

 private:
  std::shared_ptr<const AgentBundle> bundle_;
};

/// Bilinear logistic ranker: logit_j = v_j . (W [s; 1]). `weight` is
/// [d, state_dim + 1].
class BCPolicy final : public Policy {
 public:
  BCPolicy(Tensor64 weight) : weight_(std::move(weight)) {}
  std::string name() const override { return "bc"; }
  std::vector<float> scores(std::span<const float> state, std::span<const std::int64_t> pool_ids,
                            const Tensor& pool_features) const override;
  const Tensor64& weight() const { return weight_; }
  /// Query vector W [s; 1] for a state.
  std::vector<double> query(std::span<const float> state) const;

 private:
  Tensor64 weight_;
};

}  // namespace mmrf
