// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mmrf/agents.hpp"
#include "mmrf/env.hpp"
#include "mmrf/optim.hpp"
#include "mmrf/replay.hpp"
#include "mmrf/worldmodel.hpp"

namespace mmrf {

/// Treatment of non-impression slates: labelled by the world model,
/// ignored, or given a fixed reward.
enum class NonImpressionMode { simulated, disabled, constant };

std::string_view nonimpression_mode_name(NonImpressionMode mode);
NonImpressionMode parse_nonimpression_mode(std::string_view name);

struct TrainingConfig {
  double gamma = 0.9;
  double critic_lr = 1e-3;   // per-agent critic rate
  double actor_lr = 1e-3;    // main-goal weight
  double aux_lr = 1e-4;      // auxiliary-goal weight
  double noise = 0.3;        // exploration std per action coordinate
  double action_l2 = 0.5;    // penalty on the mean squared actor output
  double tau = 0.005;
  std::int64_t batch_size = 64;
  std::int64_t random_actions = 4;  // m
  double nonimpression_rate = 0.25;
  double real_fraction = 0.75;      // share of real samples in a mixed batch
  std::int64_t buffer_capacity = 100000;
  std::int64_t epochs = 40;
  std::int64_t sessions_per_epoch = 256;
  std::int64_t updates_per_epoch = 200;
  std::int64_t plateau_patience = 5;  // 0 disables early stopping
  NonImpressionMode nonimpression = NonImpressionMode::simulated;
  double constant_reward = -0.1;
  /// Multiplies each aspect's environment reward before it is stored.
  AspectVector reward_scale{1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.01};

  void validate() const;
  bool operator==(const TrainingConfig&) const = default;
};

/// Candidate slate ranked by a uniformly random action.
struct CandidateSlate {
  std::vector<float> action;
  std::vector<std::int64_t> items;
};

/// `m` random actions in [-bound, bound]^d each produce a top-k slate; each
/// slate is kept independently with probability `rate`. The keep draw is
/// made for every slate.
std::vector<CandidateSlate> sample_nonimpression(const CandidatePool& pool, std::int64_t k, double bound,
                                                 std::int64_t m, double rate, Rng& rng);

/// A retained non-impression slate with the context needed to label it.
struct NonImpressionSample {
  std::vector<float> state;
  std::vector<float> next_state;
  bool done = false;
  CandidateSlate slate;
  std::vector<float> features;  // slate block of the world-model input
  std::vector<double> hidden;  // world-model state before this request
  double mean_duration = 0.0;
};

struct SessionRollout {
  std::vector<std::vector<Transition>> transitions;  // per agent, real only
  WmSequence sequence;
  std::vector<NonImpressionSample> nonimpressions;
  AspectVector returns{};  // raw per-aspect session totals, hate negated
  std::int64_t rounds = 0;
};

/// One session under the joint policy with Gaussian exploration on every
/// agent's action. `model` (may be null) tracks the hidden state that
/// non-impression samples are labelled from.
SessionRollout collect_rollout(const Environment& env, const AgentBundle& bundle, const TrainingConfig& config,
                               const WorldModel* model, Rng& rng);

/// Labels `samples` and appends one transition per agent to `sim_buffers`.
/// Returns the number of slates stored (zero in disabled mode).
std::size_t simulate_and_store(const WorldModel* model, std::span<const NonImpressionSample> samples,
                               const AgentBundle& bundle, const TrainingConfig& config, std::int64_t k,
                               std::vector<ReplayBuffer>& sim_buffers, Rng& rng);

/// r + gamma * Q'_i(s', pi'_i(s')) with the bootstrap dropped on done.
std::vector<double> td_targets(const AgentBundle& bundle, int agent, std::span<const Transition* const> batch,
                               double gamma);
std::vector<double> td_errors(const AgentBundle& bundle, int agent, std::span<const Transition* const> batch,
                              double gamma);
double td_error(const AgentBundle& bundle, int agent, const Transition& t, double gamma);

struct CriticStep {
  double loss = 0.0;  // mean of half squared TD errors
  GradStore grads;    // raw gradient of that loss
};
/// Semi-gradient of ½δ² for fixed targets.
CriticStep critic_gradients(const AgentBundle& bundle, int agent, std::span<const Transition* const> batch,
                            std::span<const double> targets);
double update_critic(AgentBundle& bundle, OptState& opt, int agent, std::span<const Transition* const> batch,
                     double gamma, double lr);

struct ActorStep {
  double main_value = 0.0;              // mean Q_N(s, pi(s))
  std::vector<double> actor_grad_norm;  // per agent, over agent.{i} minus critic
  std::vector<double> critic_grad_norm; // per agent; computed, never applied
  GradStore grads;                      // already weighted, before optimiser scaling
};
/// Gradient of alpha * Q_N(s, pi(s)) + beta * sum_k Q_k(s, pi_k(s)) with
/// respect to every parameter; ascent direction. A positive `action_l2`
/// subtracts that multiple of each branch's mean squared action.
ActorStep actor_gradients(const AgentBundle& bundle, std::span<const std::vector<float>* const> states,
                          double alpha_main, double beta_aux, double action_l2 = 0.0);
ActorStep update_actors(AgentBundle& bundle, OptState& opt, std::span<const std::vector<float>* const> states,
                        double alpha_main, double beta_aux, double action_l2 = 0.0);

/// target <- tau * online + (1 - tau) * target for every entry.
void polyak_update(AgentBundle& bundle, double tau);

struct EpochMetrics {
  std::int64_t epoch = 0;
  std::int64_t sessions = 0;
  double mean_rounds = 0.0;
  AspectVector returns{};  // mean per-session totals
  std::vector<double> critic_loss;
  double actor_grad_norm = 0.0;
  double wm_loss = 0.0;
  std::size_t real_size = 0;
  std::size_t sim_size = 0;
  std::size_t sim_stored = 0;
};

struct TrainingReport {
  std::uint64_t seed = 0;
  std::string preset;
  std::int64_t epochs_run = 0;
  bool stopped_on_plateau = false;
  std::vector<EpochMetrics> epochs;

  std::string to_json() const;
  std::string to_csv() const;
};

struct TrainingResult {
  TrainingReport report;
  AgentBundle bundle;
  WorldModel model;
  OptState opt;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Rollouts, non-impression labelling, agent updates and world-model
/// updates per epoch. Output depends only on the inputs and `seed`, not on
/// `threads`.
TrainingResult train(const Environment& env, const AgentsConfig& agents, const WorldModelConfig& wm_config,
                     const TrainingConfig& config, std::uint64_t seed, int threads = 1,
                     const EpochCallback& on_epoch = {});

}  // namespace mmrf
