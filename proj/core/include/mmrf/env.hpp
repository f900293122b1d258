// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mmrf/rng.hpp"
#include "mmrf/tensor.hpp"

namespace mmrf {

/// Feedback aspects. The last one is the main goal.
enum class Aspect : int { click = 0, like, follow, comment, hate, long_view, watch_time };
inline constexpr int kNumAspects = 7;
inline constexpr int kWatchAspect = static_cast<int>(Aspect::watch_time);
inline constexpr int kHateAspect = static_cast<int>(Aspect::hate);

std::string_view aspect_name(int aspect);
using AspectVector = std::array<double, kNumAspects>;

struct EnvConfig {
  std::int64_t n_items = 2000;
  std::int64_t pool_size = 400;
  std::int64_t k = 6;
  std::int64_t horizon = 20;
  std::int64_t dim = 16;
  double kappa_pos = 0.08;
  double kappa_hate = 0.3;
  double leave_bias = -4.0;
  double leave_scale = 0.7;
  double long_view_threshold = 0.8;
  /// Std of the noise added to the user-profile feature.
  double profile_noise = 0.5;
  /// Std of per-user deviation from the population preference.
  double user_spread = 1.5;

  /// Throws ConfigError naming the offending key.
  void validate() const;
  bool operator==(const EnvConfig&) const = default;
};

struct ItemCatalog {
  Tensor embeddings;               // [n_items, d]
  std::vector<float> durations;    // seconds, > 0
};

/// Ground-truth preferences of one user; never exposed to policies.
struct UserModel {
  std::array<std::vector<float>, kNumAspects> pref;  // rows of U; long_view row unused
  AspectVector bias{};  // Bernoulli aspects only
  std::vector<float> profile;  // noisy projection handed to the State
};

struct ItemFeedback {
  int click = 0, like = 0, follow = 0, comment = 0, hate = 0, long_view = 0;
  double watch_ratio = 0.0;
  double watch_time = 0.0;

  /// Per-item aspect values in Aspect order, hate counted positively.
  AspectVector as_vector() const;
  bool operator==(const ItemFeedback&) const = default;
};

/// Observation shared by all agents.
struct State {
  std::vector<float> profile;
  std::vector<double> history_sum;  // watch-ratio weighted sum of shown embeddings
  double history_weight = 0.0;
  AspectVector counters{};          // cumulative per-aspect counts (hate positive, watch = sum of ratios)
  std::int64_t round = 0;
  std::int64_t horizon = 0;
  std::int64_t k = 0;
  std::vector<float> pool_summary;  // mean embedding of the current candidate pool

  /// Flattened layout: profile (d) | history mean (d) | counters / (K*T) (7)
  /// | round / T (1) | pool mean (d).
  std::vector<float> features() const;
};

inline std::int64_t state_feature_dim(std::int64_t d) { return 3 * d + kNumAspects + 1; }

struct CandidatePool {
  std::vector<std::int64_t> ids;
  Tensor features;  // [pool, d], row i = embedding of ids[i]
};

struct ExposureLog {
  std::vector<std::int64_t> shown;
  std::vector<ItemFeedback> feedback;
  std::vector<double> propensities;  // Plackett-Luce stage probability per shown item
  std::vector<std::int64_t> unshown;
};

struct Session {
  std::uint64_t id = 0;
  UserModel user;
  State state;
  CandidatePool pool;
  bool has_pool = false;
  bool done = false;
};

struct StepResult {
  ExposureLog log;
  AspectVector reward{};  // per aspect sum over shown items; hate negated
  State state;
  bool done = false;
};

/// Synthetic short-video session environment. All methods are const; the
/// mutable parts live in Session, so sessions can run on separate threads.
class Environment {
 public:
  Environment(EnvConfig config, std::uint64_t seed);

  const EnvConfig& config() const { return config_; }
  const ItemCatalog& catalog() const { return catalog_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t catalog_hash() const;
  std::int64_t state_dim() const { return state_feature_dim(config_.dim); }

  Session begin_session(Rng& rng) const;
  /// Draws a fresh pool without replacement and refreshes the pool summary.
  const CandidatePool& candidate_pool(Session& session, Rng& rng) const;
  /// Exposes the top-K of `scores` (pool order) and advances the session.
  StepResult step(Session& session, std::span<const float> scores, Rng& rng) const;
  /// Feedback for a hypothetical exposure of `items` (pool members) without
  /// touching session state. Uses the same draw sequence as `step`.
  std::vector<ItemFeedback> counterfactual_feedback(const Session& session, std::span<const std::int64_t> items,
                                                    Rng& rng) const;

  /// Probability that the Bernoulli aspect fires for `item` (closed form).
  double propensity(const UserModel& user, Aspect aspect, std::int64_t item) const;
  double base_watch_ratio(const UserModel& user, std::int64_t item) const;
  /// clip(base + kappa_pos * positives - kappa_hate * hate, 0, 1).
  double compose_watch_ratio(double base, const ItemFeedback& indicators) const;
  ItemFeedback draw_item_feedback(const UserModel& user, std::int64_t item, Rng& rng) const;
  /// Advances `state` with the shown items and their feedback.
  void advance_state(State& state, std::span<const std::int64_t> items, std::span<const ItemFeedback> feedback) const;

 private:
  EnvConfig config_;
  std::uint64_t seed_;
  ItemCatalog catalog_;
  std::array<std::vector<float>, kNumAspects> population_;  // mean preference rows
};

}  // namespace mmrf
