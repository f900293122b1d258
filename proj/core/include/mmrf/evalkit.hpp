// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmrf/env.hpp"
#include "mmrf/policy.hpp"
#include "mmrf/trajectory_log.hpp"

namespace mmrf {

struct EvalConfig {
  double cap = 5.0;
  double temperature = 1.0;
  std::int64_t episodes = 200;

  void validate() const;
  bool operator==(const EvalConfig&) const = default;
};

/// Rolls `episodes` fresh sessions under `policy` and records them. Session
/// e draws from `rng.split(e)`.
TrajectoryLog simulate_log(const Environment& env, const Policy& policy, std::int64_t episodes, const Rng& rng,
                           int threads = 1);

// ---- NCIS -----------------------------------------------------------------

struct NcisResult {
  AspectVector value{};
  std::vector<double> weights;  // per session, after capping
};

/// Plackett-Luce probability of the logged slate under `scores`.
double slate_probability(std::span<const float> scores, std::span<const std::int64_t> pool,
                         std::span<const std::int64_t> shown, double temperature);

/// Normalised capped importance sampling with session-level weights
/// w = prod_t min(cap, p_target(slate_t) / p_behavior(slate_t)).
NcisResult ncis(const TrajectoryLog& dataset, const ItemCatalog& catalog, const Policy& target, double cap,
                double temperature);

// ---- GAUC -----------------------------------------------------------------

struct AucGroup {
  std::vector<double> scores;
  std::vector<double> labels;
};

/// Fraction of label-ordered pairs the scores order the same way; ties in
/// score count one half. Empty optional when all labels are equal.
std::optional<double> pairwise_auc(std::span<const double> scores, std::span<const double> labels);

struct GaucResult {
  double value = 0.0;
  std::int64_t users = 0;
  std::int64_t skipped = 0;  // groups with constant labels
};

/// Pool embeddings for `ids`. DataError on an unknown id.
Tensor pool_features(const ItemCatalog& catalog, std::span<const std::int64_t> ids);

/// Impression-weighted mean of per-group AUC. DataError if no group is
/// scorable.
GaucResult grouped_auc(std::span<const AucGroup> groups);

/// Per-aspect GAUC of `policy` scores against realised feedback, grouped by
/// session.
std::array<GaucResult, kNumAspects> gauc(const TrajectoryLog& dataset, const ItemCatalog& catalog, const Policy& policy);

// ---- Online evaluation ----------------------------------------------------

struct OnlineResult {
  AspectVector returns{};     // mean undiscounted session totals
  AspectVector discounted{};  // mean discounted totals
  double mean_rounds = 0.0;
  std::int64_t episodes = 0;
};

OnlineResult evaluate_online(const Environment& env, const Policy& policy, std::int64_t episodes, const Rng& rng,
                             double gamma, int threads = 1);

// ---- Behaviour cloning ----------------------------------------------------

struct BcConfig {
  std::int64_t epochs = 100;
  double lr = 0.5;
  double l2 = 1e-4;

  void validate() const;
  bool operator==(const BcConfig&) const = default;
};

struct BcResult {
  BCPolicy policy;
  std::vector<double> loss;  // full-data loss after each epoch, index 0 at init
  double accuracy = 0.0;     // share of shown items inside the model's top-K
};

/// Class-balanced logistic regression on shown versus unshown pool items,
/// full-batch gradient steps with backtracking so the loss never rises.
BcResult train_bc(const TrajectoryLog& dataset, const BcConfig& config, const ItemCatalog& catalog);

// ---- Reports --------------------------------------------------------------

struct EvalReport {
  std::string policy;
  std::uint64_t seed = 0;
  std::int64_t episodes = 0;
  std::string config_hash;
  /// Metric family ("ncis", "gauc", "return", "discounted_return") to
  /// per-aspect values.
  std::map<std::string, AspectVector> metrics;
  std::vector<std::string> notes;

  std::string to_json() const;
  /// aspect rows with one column per metric family.
  std::string to_csv() const;
};

struct MetricDelta {
  std::string metric;
  std::string aspect;
  double a = 0.0;
  double b = 0.0;
  double delta = 0.0;
  double lift = 0.0;  // delta / |b|, 0 when b == 0
};

/// Per-metric (a - b) and (a - b) / |b|. Metric families must match.
std::vector<MetricDelta> compare(const EvalReport& a, const EvalReport& b);

}  // namespace mmrf
