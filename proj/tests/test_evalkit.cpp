// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "mmrf/evalkit.hpp"
#include "support.hpp"

using namespace mmrf;

namespace {

EnvConfig small_env() {
  EnvConfig c;
  c.n_items = 300;
  c.pool_size = 40;
  c.k = 4;
  c.horizon = 5;
  c.dim = 8;
  return c;
}

/// Scores every pool item zero, so Plackett-Luce is uniform.
class FlatPolicy final : public Policy {
 public:
  std::string name() const override { return "flat"; }
  std::vector<float> scores(std::span<const float>, std::span<const std::int64_t> pool_ids,
                            const Tensor&) const override {
    return std::vector<float>(pool_ids.size(), 0.0f);
  }
};

SessionRecord one_request_session(std::uint64_t id, double propensity, double watch_time) {
  RequestRecord q;
  q.state = {0.0f};
  q.pool = {0, 1};
  q.scores = {0.0f, 0.0f};
  q.shown = {0};
  q.propensities = {propensity};
  ItemFeedback f;
  f.watch_time = watch_time;
  f.watch_ratio = 0.5;
  q.feedback = {f};
  q.done = true;
  return SessionRecord{id, {q}};
}

ItemCatalog two_items() {
  ItemCatalog c;
  c.embeddings = Tensor({2, 1}, std::vector<float>{1, -1});
  c.durations = {10, 10};
  return c;
}

}  // namespace

TEST_CASE("ncis two-session hand case") {
  TrajectoryLog log;
  log.sessions = {one_request_session(0, 0.5, 1.0), one_request_session(1, 0.25, 3.0)};
  const ItemCatalog catalog = two_items();
  const FlatPolicy target;
  // Target slate probability 1/2 in both sessions: weights 1 and 2.
  const NcisResult r = ncis(log, catalog, target, std::numeric_limits<double>::infinity(), 1.0);
  CHECK(std::fabs(r.value[kWatchAspect] - (1.0 * 1.0 + 2.0 * 3.0) / 3.0) < 1e-12);
  REQUIRE(r.weights.size() == 2);
  CHECK(r.weights[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.weights[1] == doctest::Approx(2.0).epsilon(1e-12));

  const NcisResult capped = ncis(log, catalog, target, 1.5, 1.0);
  CHECK(std::fabs(capped.value[kWatchAspect] - (1.0 + 1.5 * 3.0) / 2.5) < 1e-12);

  TrajectoryLog doubled = log;
  doubled.sessions.insert(doubled.sessions.end(), log.sessions.begin(), log.sessions.end());
  CHECK(std::fabs(ncis(doubled, catalog, target, 5.0, 1.0).value[kWatchAspect] -
                  ncis(log, catalog, target, 5.0, 1.0).value[kWatchAspect]) < 1e-12);

  TrajectoryLog zero = log;
  zero.sessions[0].requests[0].propensities = {0.0};
  CHECK_THROWS_AS(ncis(zero, catalog, target, 5.0, 1.0), DataError);
  CHECK_THROWS_AS(ncis(TrajectoryLog{}, catalog, target, 5.0, 1.0), DataError);
}

TEST_CASE("ncis with target equal to behaviour is the sample mean") {
  const Environment env(small_env(), 3);
  const RandomPolicy policy(7);
  const TrajectoryLog log = simulate_log(env, policy, 40, Rng(4));
  AspectVector mean{};
  for (const auto& s : log.sessions) {
    const AspectVector r = s.total_reward();
    for (int a = 0; a < kNumAspects; ++a) mean[static_cast<std::size_t>(a)] += r[static_cast<std::size_t>(a)] / 40.0;
  }
  for (double cap : {5.0, 1.0}) {
    CAPTURE(cap);
    const NcisResult r = ncis(log, env.catalog(), policy, cap, 1.0);
    for (double w : r.weights) CHECK(std::fabs(w - 1.0) < 1e-9);
    for (int a = 0; a < kNumAspects; ++a) {
      CHECK(std::fabs(r.value[static_cast<std::size_t>(a)] - mean[static_cast<std::size_t>(a)]) < 1e-9);
    }
  }
}

TEST_CASE("ncis weights stay within the cap") {
  const Environment env(small_env(), 5);
  const TrajectoryLog log = simulate_log(env, RandomPolicy(1), 30, Rng(6));
  const HeuristicPolicy target(8, 4.0, 0.5, 2);
  const double cap = 3.0;
  const NcisResult r = ncis(log, env.catalog(), target, cap, 1.0);
  for (std::size_t s = 0; s < r.weights.size(); ++s) {
    CHECK(r.weights[s] > 0.0);
    CHECK(r.weights[s] <= std::pow(cap, static_cast<double>(log.sessions[s].requests.size())) * (1.0 + 1e-12));
  }
  for (double v : r.value) CHECK(std::isfinite(v));
}

TEST_CASE("pairwise auc") {
  const std::vector<double> labels{0, 1, 0, 1, 1};
  const std::vector<double> perfect{0.1, 0.9, 0.2, 0.8, 0.7};
  CHECK(*pairwise_auc(perfect, labels) == 1.0);
  std::vector<double> reversed;
  for (double s : perfect) reversed.push_back(-s);
  CHECK(*pairwise_auc(reversed, labels) == 0.0);
  CHECK(*pairwise_auc(std::vector<double>(5, 1.0), labels) == 0.5);
  CHECK(!pairwise_auc(perfect, std::vector<double>(5, 1.0)).has_value());
  CHECK_THROWS_AS(pairwise_auc(perfect, std::vector<double>{1.0}), DimensionError);

  const std::vector<double> watch{3.0, 1.0, 2.0};
  CHECK(*pairwise_auc(std::vector<double>{30, 10, 20}, watch) == 1.0);
}

TEST_CASE("gauc of random scores is near one half") {
  Rng rng(8);
  std::vector<AucGroup> groups(150);
  for (auto& g : groups) {
    for (int i = 0; i < 20; ++i) {
      g.scores.push_back(rng.normal());
      g.labels.push_back(i < 5 ? 1.0 : 0.0);
    }
  }
  // 150 groups x 5 x 15 = 11250 labelled pairs.
  const GaucResult r = grouped_auc(groups);
  CHECK(r.value >= 0.45);
  CHECK(r.value <= 0.55);
  CHECK(r.users == 150);

  std::vector<AucGroup> mapped = groups;
  for (auto& g : mapped) {
    for (auto& s : g.scores) s = std::exp(3.0 * s) + 1.0;
  }
  CHECK(grouped_auc(mapped).value == r.value);

  std::vector<AucGroup> with_flat = groups;
  with_flat.push_back(AucGroup{{1.0, 2.0}, {0.0, 0.0}});
  CHECK(grouped_auc(with_flat).skipped == 1);
  CHECK(grouped_auc(with_flat).value == r.value);
  CHECK_THROWS_AS(grouped_auc(std::vector<AucGroup>{AucGroup{{1.0}, {1.0}}}), DataError);
}

TEST_CASE("gauc weights groups by impressions") {
  std::vector<AucGroup> groups{AucGroup{{1, 0}, {1, 0}}, AucGroup{{0, 1, 2, 3}, {1, 1, 0, 0}}};
  CHECK(grouped_auc(groups).value == doctest::Approx((2.0 * 1.0 + 4.0 * 0.0) / 6.0));
}

TEST_CASE("gauc over a simulated log") {
  const Environment env(small_env(), 9);
  const TrajectoryLog log = simulate_log(env, RandomPolicy(3), 30, Rng(10));
  const auto res = gauc(log, env.catalog(), RandomPolicy(3));
  for (const auto& r : res) {
    CHECK(r.value >= 0.0);
    CHECK(r.value <= 1.0);
    CHECK(r.users + r.skipped == 30);
  }
}

TEST_CASE("online evaluation") {
  const Environment env(small_env(), 11);
  const RandomPolicy policy(4);
  const OnlineResult a = evaluate_online(env, policy, 25, Rng(12), 0.9);
  const OnlineResult b = evaluate_online(env, policy, 25, Rng(12), 0.9, 3);
  CHECK(a.returns == b.returns);
  CHECK(a.discounted == b.discounted);
  for (double v : a.returns) CHECK(std::isfinite(v));
  float max_duration = 0.0f;
  for (float d : env.catalog().durations) max_duration = std::max(max_duration, d);
  CHECK(a.returns[kWatchAspect] <= static_cast<double>(env.config().horizon * env.config().k) * max_duration);
  CHECK(a.returns[kWatchAspect] > 0.0);
  CHECK(a.mean_rounds >= 1.0);
  CHECK(a.mean_rounds <= static_cast<double>(env.config().horizon));
  CHECK(a.discounted[kWatchAspect] <= a.returns[kWatchAspect]);
  CHECK_THROWS_AS(evaluate_online(env, policy, 0, Rng(12), 0.9), ConfigError);
}

TEST_CASE("behaviour cloning on a separable log") {
  ItemCatalog catalog;
  Rng rng(13);
  const std::int64_t n = 200, d = 3;
  catalog.embeddings = Tensor({n, d});
  for (std::int64_t i = 0; i < n; ++i) {
    catalog.embeddings.at(i, 0) = i % 5 == 0 ? 1.0f : -1.0f;
    for (std::int64_t c = 1; c < d; ++c) catalog.embeddings.at(i, c) = static_cast<float>(rng.normal());
    catalog.durations.push_back(10.0f);
  }
  TrajectoryLog log;
  for (std::uint64_t s = 0; s < 20; ++s) {
    SessionRecord rec{s, {}};
    for (int t = 0; t < 3; ++t) {
      RequestRecord q;
      q.state = {static_cast<float>(rng.normal()), static_cast<float>(rng.normal())};
      const auto first = static_cast<std::int64_t>(rng.uniform() * static_cast<double>(n - 20));
      for (std::int64_t j = first; j < first + 20; ++j) {
        q.pool.push_back(j);
        if (j % 5 == 0) q.shown.push_back(j);
      }
      q.scores.assign(q.pool.size(), 0.0f);
      q.propensities.assign(q.shown.size(), 0.25);
      q.feedback.assign(q.shown.size(), ItemFeedback{});
      rec.requests.push_back(std::move(q));
    }
    log.sessions.push_back(std::move(rec));
  }
  BcConfig config;
  config.epochs = 30;
  const BcResult r = train_bc(log, config, catalog);
  CHECK(r.accuracy > 0.95);
  REQUIRE(r.loss.size() == 31);
  for (std::size_t e = 1; e < r.loss.size(); ++e) CHECK(r.loss[e] <= r.loss[e - 1]);
  CHECK(r.loss.back() < r.loss.front());

  const BcResult again = train_bc(log, config, catalog);
  CHECK(again.policy.weight() == r.policy.weight());
  CHECK(again.loss == r.loss);

  CHECK_THROWS_AS(train_bc(TrajectoryLog{}, config, catalog), DataError);
  config.lr = 0.0;
  CHECK_THROWS_AS(train_bc(log, config, catalog), ConfigError);
}

TEST_CASE("report comparison") {
  EvalReport a;
  a.metrics["return"].fill(2.0);
  a.metrics["ncis"].fill(1.0);
  EvalReport b = a;
  for (const auto& m : compare(a, b)) {
    CHECK(m.delta == 0.0);
    CHECK(m.lift == 0.0);
  }
  b.metrics["return"][kWatchAspect] = 4.0;
  b.metrics["return"][0] = 0.0;
  const auto ab = compare(a, b), ba = compare(b, a);
  REQUIRE(ab.size() == 2 * kNumAspects);
  for (std::size_t i = 0; i < ab.size(); ++i) CHECK(ab[i].delta == -ba[i].delta);
  for (const auto& m : ab) {
    if (m.metric == "return" && m.aspect == aspect_name(kWatchAspect)) {
      CHECK(m.delta == -2.0);
      CHECK(m.lift == -0.5);
    }
    if (m.metric == "return" && m.aspect == aspect_name(0)) {
      CHECK(m.delta == 2.0);
      CHECK(m.lift == 0.0);
    }
  }
  EvalReport c;
  c.metrics["gauc"].fill(0.5);
  c.metrics["ncis"].fill(1.0);
  CHECK_THROWS_AS(compare(a, c), ContractError);
  c.metrics.erase("gauc");
  CHECK_THROWS_AS(compare(a, c), ContractError);
}

TEST_CASE("report serialisation lists every aspect") {
  EvalReport r;
  r.policy = "random";
  r.metrics["ncis"].fill(0.5);
  const std::string json = r.to_json();
  for (int a = 0; a < kNumAspects; ++a) CHECK(json.find(std::string(aspect_name(a))) != std::string::npos);
  const std::string csv = r.to_csv();
  CHECK(csv.rfind("aspect,ncis\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == kNumAspects + 1);
}
