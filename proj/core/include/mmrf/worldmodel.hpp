// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "mmrf/env.hpp"
#include "mmrf/nn.hpp"
#include "mmrf/optim.hpp"

namespace mmrf {

struct WorldModelConfig {
  std::int64_t proj_dim = 32;
  std::int64_t hidden = 32;
  std::int64_t head_hidden = 32;
  double lambda = 1.0;     // KL scaling in the uncertainty multiplier
  double dropout = 0.2;    // predictor B only
  double lr = 3e-3;
  std::int64_t batch_sessions = 16;
  std::int64_t updates_per_epoch = 8;
  std::int64_t capacity_sessions = 5000;

  void validate() const;
  bool operator==(const WorldModelConfig&) const = default;
};

inline constexpr double kProbClamp = 1e-6;

/// Recurrent feedback model with two predictor stacks on a shared GRU
/// trunk. Parameters live under "worldmodel.".
class WorldModel {
 public:
  WorldModel(WorldModelConfig config, std::int64_t state_dim, std::int64_t item_dim, Rng& rng);

  const WorldModelConfig& config() const { return config_; }
  std::int64_t state_dim() const { return state_dim_; }
  std::int64_t item_dim() const { return item_dim_; }
  /// Width of the slate block: mean slate embedding followed by the action.
  std::int64_t slate_dim() const { return 2 * item_dim_; }
  std::int64_t input_dim() const { return state_dim_ + slate_dim(); }
  std::vector<double> initial_hidden() const { return std::vector<double>(static_cast<std::size_t>(config_.hidden), 0.0); }

  ParamStore params;
  AdamState opt;
  std::int64_t epochs_trained = 0;

 private:
  WorldModelConfig config_;
  std::int64_t state_dim_;
  std::int64_t item_dim_;
};

/// Slate block for the model input: mean embedding of `items` then `action`.
std::vector<float> slate_features(const ItemCatalog& catalog, std::span<const std::int64_t> items,
                                  std::span<const float> action);

/// Normalised per-request targets in [0, 1]: binary aspects as per-slate
/// means (hate counted positive), WatchTime as the mean watch ratio.
AspectVector feedback_targets(std::span<const ItemFeedback> feedback);

struct WmPrediction {
  AspectVector a{};
  AspectVector b{};
  std::vector<double> hidden;
};

/// One recurrent step. Predictor B draws its dropout masks from `rng`.
WmPrediction wm_observe(const WorldModel& model, std::span<const double> hidden, std::span<const float> state,
                        std::span<const float> slate, Rng& rng);

/// Graph form of one step for batched training and gradient checks.
struct WmStepVars {
  Var hidden;
  Var pred_a;  // [B, 7]
  Var pred_b;  // [B, 7]
};
WmStepVars wm_step(const nn::Binder& p, const WorldModel& model, Var hidden, Var input, Rng& rng, bool train);

/// Squared error summed over the given predictors and all heads.
double wm_loss(std::span<const AspectVector> predictions, const AspectVector& targets);
Var wm_loss(Var pred_a, Var pred_b, Var targets);

/// exp(lambda * KL((a, 1-a) || (b, 1-b))) after clamping both to [eps, 1-eps].
double uncertainty_multiplier(double r_a, double r_b, double lambda);
/// mean(a, b) * uncertainty multiplier.
double simulated_value(double r_a, double r_b, double lambda);

/// Simulated reward for `aspect` on a hypothetical slate, hate negated.
/// Values are on the normalised [0, 1] target scale.
double simulate_reward(const WmPrediction& prediction, int aspect, double lambda);
/// Scale of the environment reward: counts times K, watch time times
/// K times the mean duration of the slate.
double denormalize_reward(int aspect, double value, std::int64_t k, double mean_duration);

/// One request inside a worldmodel training sequence.
struct WmStep {
  std::vector<float> state;
  std::vector<float> slate;
  AspectVector targets{};
  bool impression = true;
};
using WmSequence = std::vector<WmStep>;

/// Session sequences from real impressions only. Pushing anything
/// simulated is a contract violation.
class WmSequenceBuffer {
 public:
  explicit WmSequenceBuffer(std::size_t capacity);
  void push(WmSequence sequence);
  std::vector<const WmSequence*> sample(std::size_t n, Rng& rng) const;
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const WmSequence& at(std::size_t i) const { return items_.at(i); }

 private:
  std::size_t capacity_;
  std::vector<WmSequence> items_;
  std::size_t head_ = 0;
};

/// One optimiser step on the summed loss over full sequences (padded and
/// masked to the longest). Returns the mean per-step loss.
double wm_update(WorldModel& model, std::span<const WmSequence* const> batch, double lr, Rng& rng);

/// Per-aspect mean squared error of predictor A over `sequences`.
AspectVector wm_mse(const WorldModel& model, std::span<const WmSequence* const> sequences);

}  // namespace mmrf
