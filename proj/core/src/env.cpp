// SPDX-License-Identifier: Apache-2.0
#include "mmrf/env.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "mmrf/ranking.hpp"

namespace mmrf {

namespace {

constexpr std::array<std::string_view, kNumAspects> kAspectNames = {
    "click", "like", "follow", "comment", "hate", "longview", "watchtime"};

// Population-level base rates (logits) per aspect. long_view is derived
// from the watch ratio and has no rate of its own.
constexpr AspectVector kBaseBias = {-1.0, -2.5, -4.0, -3.5, -3.0, 0.0, 0.0};
// Correlation of each aspect's preference with the watch preference.
constexpr AspectVector kWatchCorrelation = {0.5, 0.6, 0.5, 0.6, -0.6, 0.0, 1.0};

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double dot(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

std::vector<float> normal_vector(std::int64_t d, double stddev, Rng& rng) {
  std::vector<float> v(static_cast<std::size_t>(d));
  for (auto& x : v) x = static_cast<float>(rng.normal() * stddev);
  return v;
}

void require(bool ok, const std::string& key, const std::string& constraint) {
  if (!ok) throw ConfigError("env." + key + ": " + constraint);
}

}  // namespace

std::string_view aspect_name(int aspect) {
  if (aspect < 0 || aspect >= kNumAspects) throw ContractError("aspect index out of range");
  return kAspectNames[static_cast<std::size_t>(aspect)];
}

void EnvConfig::validate() const {
  require(dim >= 1, "dim", "must be >= 1");
  require(pool_size >= 1, "pool_size", "must be >= 1");
  require(k >= 1, "k", "must be >= 1");
  require(k <= pool_size, "k", "K (" + std::to_string(k) + ") must not exceed pool_size (" +
                                   std::to_string(pool_size) + ")");
  require(n_items >= pool_size, "n_items", "must be >= pool_size");
  require(horizon >= 1, "horizon", "must be >= 1");
  require(std::isfinite(kappa_pos) && kappa_pos >= 0.0, "kappa_pos", "must be finite and >= 0");
  require(std::isfinite(kappa_hate) && kappa_hate >= 0.0, "kappa_hate", "must be finite and >= 0");
  require(std::isfinite(leave_scale), "leave_scale", "must be finite");
  require(!std::isnan(leave_bias), "leave_bias", "must not be NaN");
  require(long_view_threshold >= 0.0 && long_view_threshold <= 1.0, "long_view_threshold", "must lie in [0, 1]");
  require(profile_noise >= 0.0, "profile_noise", "must be >= 0");
  require(user_spread >= 0.0, "user_spread", "must be >= 0");
}

AspectVector ItemFeedback::as_vector() const {
  return {double(click), double(like), double(follow), double(comment), double(hate), double(long_view), watch_time};
}

std::vector<float> State::features() const {
  const std::size_t d = profile.size();
  std::vector<float> f;
  f.reserve(3 * d + kNumAspects + 1);
  f.insert(f.end(), profile.begin(), profile.end());
  for (std::size_t i = 0; i < d; ++i) {
    f.push_back(history_weight > 0.0 ? static_cast<float>(history_sum[i] / history_weight) : 0.0f);
  }
  const double norm = static_cast<double>(std::max<std::int64_t>(1, k * horizon));
  for (double c : counters) f.push_back(static_cast<float>(c / norm));
  f.push_back(horizon > 0 ? static_cast<float>(static_cast<double>(round) / static_cast<double>(horizon)) : 0.0f);
  if (pool_summary.empty()) {
    f.insert(f.end(), d, 0.0f);
  } else {
    f.insert(f.end(), pool_summary.begin(), pool_summary.end());
  }
  return f;
}

Environment::Environment(EnvConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
  config_.validate();
  const Rng root(seed);
  const std::int64_t d = config_.dim;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  Rng cat = root.split("catalog");
  catalog_.embeddings = Tensor({config_.n_items, d});
  for (auto& x : catalog_.embeddings.values()) x = static_cast<float>(cat.normal() * inv_sqrt_d);

  // Longer videos lie along one fixed direction of the embedding space.
  Rng dur = root.split("duration");
  std::vector<float> dir = normal_vector(d, 1.0, dur);
  const double dn = std::sqrt(dot(dir, dir));
  for (auto& x : dir) x = static_cast<float>(x / dn);
  catalog_.durations.resize(static_cast<std::size_t>(config_.n_items));
  for (std::int64_t i = 0; i < config_.n_items; ++i) {
    const double z = dot(dir, catalog_.embeddings.row_span(i)) / inv_sqrt_d;
    catalog_.durations[static_cast<std::size_t>(i)] = static_cast<float>(8.0 + 52.0 * sigmoid(1.5 * z));
  }

  Rng pop = root.split("population");
  population_[kWatchAspect] = normal_vector(d, 1.0, pop);
  for (int a = 0; a < kNumAspects; ++a) {
    if (a == kWatchAspect) continue;
    const double rho = kWatchCorrelation[static_cast<std::size_t>(a)];
    std::vector<float> own = normal_vector(d, 1.0, pop);
    for (std::int64_t i = 0; i < d; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      own[ui] = static_cast<float>(rho * population_[kWatchAspect][ui] + std::sqrt(1.0 - rho * rho) * own[ui]);
    }
    population_[static_cast<std::size_t>(a)] = std::move(own);
  }
}

std::uint64_t Environment::catalog_hash() const {
  const std::uint64_t h1 = Rng::hash_bytes(std::as_bytes(catalog_.embeddings.values()));
  const std::uint64_t h2 = Rng::hash_bytes(std::as_bytes(std::span<const float>(catalog_.durations)));
  return Rng::mix(h1 ^ (h2 + 0x9e3779b97f4a7c15ULL));
}

Session Environment::begin_session(Rng& rng) const {
  const std::int64_t d = config_.dim;
  Session s;
  s.id = rng.next_u64();
  std::vector<float> own_watch = normal_vector(d, 1.0, rng);
  for (int a = 0; a < kNumAspects; ++a) {
    const double rho = kWatchCorrelation[static_cast<std::size_t>(a)];
    std::vector<float> own = normal_vector(d, 1.0, rng);
    std::vector<float> row(static_cast<std::size_t>(d));
    for (std::size_t i = 0; i < row.size(); ++i) {
      const double dev = a == kWatchAspect ? own_watch[i] : rho * own_watch[i] + std::sqrt(1.0 - rho * rho) * own[i];
      row[i] = static_cast<float>(population_[static_cast<std::size_t>(a)][i] + config_.user_spread * dev);
    }
    s.user.pref[static_cast<std::size_t>(a)] = std::move(row);
    s.user.bias[static_cast<std::size_t>(a)] = kBaseBias[static_cast<std::size_t>(a)] + 0.3 * rng.normal();
  }
  s.user.profile.resize(static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < s.user.profile.size(); ++i) {
    s.user.profile[i] =
        static_cast<float>(0.5 * (s.user.pref[kWatchAspect][i] + config_.profile_noise * rng.normal()));
  }

  s.state.profile = s.user.profile;
  s.state.history_sum.assign(static_cast<std::size_t>(d), 0.0);
  s.state.horizon = config_.horizon;
  s.state.k = config_.k;
  return s;
}

const CandidatePool& Environment::candidate_pool(Session& session, Rng& rng) const {
  if (session.done) throw SessionError("candidate_pool: session already finished");
  const std::int64_t n = config_.n_items, p = config_.pool_size, d = config_.dim;
  if (p > n) throw ConfigError("env.pool_size: catalog exhausted (" + std::to_string(n) + " items)");
  // Partial Fisher-Yates over the catalog ids.
  std::vector<std::int64_t> ids(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = i;
  for (std::int64_t i = 0; i < p; ++i) {
    const auto j = i + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
  }
  ids.resize(static_cast<std::size_t>(p));

  CandidatePool pool;
  pool.features = Tensor({p, d});
  std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
  for (std::int64_t r = 0; r < p; ++r) {
    auto src = catalog_.embeddings.row_span(ids[static_cast<std::size_t>(r)]);
    auto dst = pool.features.row_span(r);
    std::copy(src.begin(), src.end(), dst.begin());
    for (std::int64_t c = 0; c < d; ++c) mean[static_cast<std::size_t>(c)] += src[static_cast<std::size_t>(c)];
  }
  pool.ids = std::move(ids);
  session.state.pool_summary.resize(static_cast<std::size_t>(d));
  for (std::int64_t c = 0; c < d; ++c) {
    session.state.pool_summary[static_cast<std::size_t>(c)] =
        static_cast<float>(mean[static_cast<std::size_t>(c)] / static_cast<double>(p));
  }
  session.pool = std::move(pool);
  session.has_pool = true;
  return session.pool;
}

double Environment::propensity(const UserModel& user, Aspect aspect, std::int64_t item) const {
  const auto a = static_cast<std::size_t>(aspect);
  return sigmoid(dot(user.pref[a], catalog_.embeddings.row_span(item)) + user.bias[a]);
}

double Environment::base_watch_ratio(const UserModel& user, std::int64_t item) const {
  return sigmoid(dot(user.pref[kWatchAspect], catalog_.embeddings.row_span(item)));
}

double Environment::compose_watch_ratio(double base, const ItemFeedback& f) const {
  const double positives = f.like + f.comment + f.follow + f.click;
  return std::clamp(base + config_.kappa_pos * positives - config_.kappa_hate * f.hate, 0.0, 1.0);
}

ItemFeedback Environment::draw_item_feedback(const UserModel& user, std::int64_t item, Rng& rng) const {
  // Fixed draw order; every draw is consumed even when its outcome is forced.
  ItemFeedback f;
  f.hate = rng.bernoulli(propensity(user, Aspect::hate, item)) ? 1 : 0;
  f.click = rng.bernoulli(propensity(user, Aspect::click, item)) ? 1 : 0;
  const bool like = rng.bernoulli(propensity(user, Aspect::like, item));
  f.like = (like && !f.hate) ? 1 : 0;
  f.follow = rng.bernoulli(propensity(user, Aspect::follow, item)) ? 1 : 0;
  f.comment = rng.bernoulli(propensity(user, Aspect::comment, item)) ? 1 : 0;
  f.watch_ratio = compose_watch_ratio(base_watch_ratio(user, item), f);
  f.long_view = f.watch_ratio >= config_.long_view_threshold ? 1 : 0;
  f.watch_time = f.watch_ratio * static_cast<double>(catalog_.durations[static_cast<std::size_t>(item)]);
  return f;
}

void Environment::advance_state(State& state, std::span<const std::int64_t> items,
                                std::span<const ItemFeedback> feedback) const {
  for (std::size_t j = 0; j < items.size(); ++j) {
    const auto emb = catalog_.embeddings.row_span(items[j]);
    const double w = feedback[j].watch_ratio;
    for (std::size_t c = 0; c < emb.size(); ++c) state.history_sum[c] += w * emb[c];
    state.history_weight += w;
    AspectVector v = feedback[j].as_vector();
    v[kWatchAspect] = feedback[j].watch_ratio;
    for (int a = 0; a < kNumAspects; ++a) state.counters[static_cast<std::size_t>(a)] += v[static_cast<std::size_t>(a)];
  }
  ++state.round;
}

StepResult Environment::step(Session& session, std::span<const float> scores, Rng& rng) const {
  if (session.done) throw SessionError("step: session already finished");
  if (!session.has_pool) throw SessionError("step: no candidate pool drawn for this round");
  const auto& pool = session.pool;
  if (static_cast<std::int64_t>(scores.size()) != static_cast<std::int64_t>(pool.ids.size())) {
    throw DimensionError("step: got " + std::to_string(scores.size()) + " scores for a pool of " +
                         std::to_string(pool.ids.size()));
  }
  for (float s : scores) {
    if (!std::isfinite(s)) throw ContractError("step: non-finite score");
  }

  const auto positions = top_k_positions(scores, pool.ids, static_cast<std::size_t>(config_.k));
  StepResult out;
  out.log.propensities = plackett_luce_stage_probs(scores, positions, 1.0);
  for (std::size_t pos : positions) out.log.shown.push_back(pool.ids[pos]);
  out.log.feedback = counterfactual_feedback(session, out.log.shown, rng);

  std::vector<char> shown_mask(pool.ids.size(), 0);
  for (std::size_t pos : positions) shown_mask[pos] = 1;
  for (std::size_t i = 0; i < pool.ids.size(); ++i) {
    if (!shown_mask[i]) out.log.unshown.push_back(pool.ids[i]);
  }

  for (const auto& f : out.log.feedback) {
    const AspectVector v = f.as_vector();
    for (int a = 0; a < kNumAspects; ++a) out.reward[static_cast<std::size_t>(a)] += v[static_cast<std::size_t>(a)];
  }
  out.reward[kHateAspect] = -out.reward[kHateAspect];

  advance_state(session.state, out.log.shown, out.log.feedback);
  const double leave_p = sigmoid(config_.leave_bias + config_.leave_scale * session.state.counters[kHateAspect]);
  const bool leave = rng.bernoulli(leave_p);
  session.done = session.state.round >= config_.horizon || leave;
  session.has_pool = false;
  out.done = session.done;
  out.state = session.state;
  return out;
}

std::vector<ItemFeedback> Environment::counterfactual_feedback(const Session& session,
                                                               std::span<const std::int64_t> items, Rng& rng) const {
  if (session.has_pool) {
    std::unordered_set<std::int64_t> members(session.pool.ids.begin(), session.pool.ids.end());
    for (auto id : items) {
      if (!members.count(id)) throw ContractError("counterfactual_feedback: item " + std::to_string(id) + " not in pool");
    }
  } else {
    throw SessionError("counterfactual_feedback: no candidate pool drawn for this round");
  }
  std::vector<ItemFeedback> out;
  out.reserve(items.size());
  for (auto id : items) out.push_back(draw_item_feedback(session.user, id, rng));
  return out;
}

}  // namespace mmrf
