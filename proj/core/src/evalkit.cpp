// SPDX-License-Identifier: Apache-2.0
#include "mmrf/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "mmrf/parallel.hpp"
#include "mmrf/ranking.hpp"

namespace mmrf {

void EvalConfig::validate() const {
  if (!(cap > 0.0)) throw ConfigError("eval.cap: must be > 0");
  if (!(temperature > 0.0 && std::isfinite(temperature))) throw ConfigError("eval.temperature: must be > 0");
  if (episodes < 1) throw ConfigError("eval.episodes: must be >= 1");
}

void BcConfig::validate() const {
  if (epochs < 0) throw ConfigError("bc.epochs: must be >= 0");
  if (!(lr > 0.0 && std::isfinite(lr))) throw ConfigError("bc.lr: must be > 0");
  if (!(l2 >= 0.0 && std::isfinite(l2))) throw ConfigError("bc.l2: must be >= 0");
}

Tensor pool_features(const ItemCatalog& catalog, std::span<const std::int64_t> ids) {
  const std::int64_t d = catalog.embeddings.cols();
  Tensor t({static_cast<std::int64_t>(ids.size()), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const auto id = ids[r];
    if (id < 0 || id >= catalog.embeddings.rows()) throw DataError("item id " + std::to_string(id) + " not in catalog");
    auto src = catalog.embeddings.row_span(id);
    std::copy(src.begin(), src.end(), t.data() + static_cast<std::ptrdiff_t>(r) * d);
  }
  return t;
}

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

TrajectoryLog simulate_log(const Environment& env, const Policy& policy, std::int64_t episodes, const Rng& rng,
                           int threads) {
  if (episodes < 1) throw ConfigError("simulate: episodes must be >= 1");
  TrajectoryLog log;
  log.header.env_seed = env.seed();
  log.header.catalog_hash = env.catalog_hash();
  log.header.policy = policy.name();
  log.sessions.resize(static_cast<std::size_t>(episodes));
  parallel_for(log.sessions.size(), threads, [&](std::size_t e) {
    Rng r = rng.split(static_cast<std::uint64_t>(e));
    Session session = env.begin_session(r);
    SessionRecord rec;
    rec.session_id = static_cast<std::uint64_t>(e);
    while (!session.done) {
      env.candidate_pool(session, r);
      RequestRecord q;
      q.round = session.state.round;
      q.state = session.state.features();
      q.pool = session.pool.ids;
      q.scores = policy.scores(q.state, q.pool, session.pool.features);
      const StepResult step = env.step(session, q.scores, r);
      q.shown = step.log.shown;
      q.propensities = step.log.propensities;
      q.feedback = step.log.feedback;
      q.done = step.done;
      rec.requests.push_back(std::move(q));
    }
    log.sessions[e] = std::move(rec);
  });
  return log;
}

// ---- NCIS -----------------------------------------------------------------

double slate_probability(std::span<const float> scores, std::span<const std::int64_t> pool,
                         std::span<const std::int64_t> shown, double temperature) {
  std::vector<std::size_t> positions;
  positions.reserve(shown.size());
  for (auto id : shown) {
    auto it = std::find(pool.begin(), pool.end(), id);
    if (it == pool.end()) throw DataError("shown item " + std::to_string(id) + " is not in the pool");
    positions.push_back(static_cast<std::size_t>(it - pool.begin()));
  }
  double p = 1.0;
  for (double s : plackett_luce_stage_probs(scores, positions, temperature)) p *= s;
  return p;
}

NcisResult ncis(const TrajectoryLog& dataset, const ItemCatalog& catalog, const Policy& target, double cap,
                double temperature) {
  if (dataset.sessions.empty()) throw DataError("ncis: empty dataset");
  if (!(cap > 0.0)) throw ConfigError("eval.cap: must be > 0");
  NcisResult res;
  AspectVector num_acc{};
  double den = 0.0;
  for (const auto& s : dataset.sessions) {
    double log_w = 0.0;
    for (const auto& q : s.requests) {
      double log_beh = 0.0;
      for (double p : q.propensities) {
        if (!(p > 0.0)) throw DataError("ncis: zero behaviour propensity in session " + std::to_string(s.session_id));
        log_beh += std::log(p);
      }
      const std::vector<float> scores = target.scores(q.state, q.pool, pool_features(catalog, q.pool));
      std::vector<std::size_t> positions;
      for (auto id : q.shown) {
        auto it = std::find(q.pool.begin(), q.pool.end(), id);
        if (it == q.pool.end()) throw DataError("ncis: shown item not in pool");
        positions.push_back(static_cast<std::size_t>(it - q.pool.begin()));
      }
      double log_tgt = 0.0;
      for (double p : plackett_luce_stage_probs(scores, positions, temperature)) log_tgt += std::log(p);
      log_w += std::min(std::log(cap), log_tgt - log_beh);
    }
    const double w = std::exp(log_w);
    res.weights.push_back(w);
    const AspectVector r = s.total_reward();
    for (int a = 0; a < kNumAspects; ++a) num_acc[static_cast<std::size_t>(a)] += w * r[static_cast<std::size_t>(a)];
    den += w;
  }
  if (!(den > 0.0)) throw DataError("ncis: all session weights vanished");
  for (int a = 0; a < kNumAspects; ++a) res.value[static_cast<std::size_t>(a)] = num_acc[static_cast<std::size_t>(a)] / den;
  return res;
}

// ---- GAUC -----------------------------------------------------------------

std::optional<double> pairwise_auc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw DimensionError("auc: scores and labels differ in length");
  double hits = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (!(labels[i] > labels[j])) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) {
        hits += 1.0;
      } else if (scores[i] == scores[j]) {
        hits += 0.5;
      }
    }
  }
  if (pairs == 0.0) return std::nullopt;
  return hits / pairs;
}

GaucResult grouped_auc(std::span<const AucGroup> groups) {
  GaucResult res;
  double num_acc = 0.0;
  double den = 0.0;
  for (const auto& g : groups) {
    const auto auc = pairwise_auc(g.scores, g.labels);
    if (!auc) {
      ++res.skipped;
      continue;
    }
    const auto n = static_cast<double>(g.labels.size());
    num_acc += n * *auc;
    den += n;
    ++res.users;
  }
  if (res.users == 0) throw DataError("gauc: no user has both positive and negative labels");
  res.value = num_acc / den;
  return res;
}

std::array<GaucResult, kNumAspects> gauc(const TrajectoryLog& dataset, const ItemCatalog& catalog, const Policy& policy) {
  if (dataset.sessions.empty()) throw DataError("gauc: empty dataset");
  std::array<std::vector<AucGroup>, kNumAspects> groups;
  for (const auto& s : dataset.sessions) {
    std::array<AucGroup, kNumAspects> g;
    for (const auto& q : s.requests) {
      const auto all = policy.scores(q.state, q.pool, pool_features(catalog, q.pool));
      for (std::size_t k = 0; k < q.shown.size(); ++k) {
        auto it = std::find(q.pool.begin(), q.pool.end(), q.shown[k]);
        if (it == q.pool.end()) throw DataError("gauc: shown item not in pool");
        const double sc = all[static_cast<std::size_t>(it - q.pool.begin())];
        const AspectVector v = q.feedback[k].as_vector();
        for (int a = 0; a < kNumAspects; ++a) {
          g[static_cast<std::size_t>(a)].scores.push_back(sc);
          g[static_cast<std::size_t>(a)].labels.push_back(v[static_cast<std::size_t>(a)]);
        }
      }
    }
    for (int a = 0; a < kNumAspects; ++a) groups[static_cast<std::size_t>(a)].push_back(std::move(g[static_cast<std::size_t>(a)]));
  }
  std::array<GaucResult, kNumAspects> out;
  for (int a = 0; a < kNumAspects; ++a) {
    try {
      out[static_cast<std::size_t>(a)] = grouped_auc(groups[static_cast<std::size_t>(a)]);
    } catch (const DataError& e) {
      throw DataError(std::string("gauc[") + std::string(aspect_name(a)) + "]: " + e.what());
    }
  }
  return out;
}

// ---- Online evaluation ----------------------------------------------------

OnlineResult evaluate_online(const Environment& env, const Policy& policy, std::int64_t episodes, const Rng& rng,
                             double gamma, int threads) {
  if (episodes < 1) throw ConfigError("eval.episodes: must be >= 1");
  struct One {
    AspectVector ret{}, disc{};
    std::int64_t rounds = 0;
  };
  std::vector<One> per(static_cast<std::size_t>(episodes));
  parallel_for(per.size(), threads, [&](std::size_t e) {
    Rng r = rng.split(static_cast<std::uint64_t>(e));
    Session session = env.begin_session(r);
    double discount = 1.0;
    One& o = per[e];
    while (!session.done) {
      env.candidate_pool(session, r);
      const auto state = session.state.features();
      const auto scores = policy.scores(state, session.pool.ids, session.pool.features);
      const StepResult step = env.step(session, scores, r);
      for (int a = 0; a < kNumAspects; ++a) {
        o.ret[static_cast<std::size_t>(a)] += step.reward[static_cast<std::size_t>(a)];
        o.disc[static_cast<std::size_t>(a)] += discount * step.reward[static_cast<std::size_t>(a)];
      }
      discount *= gamma;
      ++o.rounds;
    }
  });
  OnlineResult res;
  res.episodes = episodes;
  for (const auto& o : per) {
    for (int a = 0; a < kNumAspects; ++a) {
      res.returns[static_cast<std::size_t>(a)] += o.ret[static_cast<std::size_t>(a)];
      res.discounted[static_cast<std::size_t>(a)] += o.disc[static_cast<std::size_t>(a)];
    }
    res.mean_rounds += static_cast<double>(o.rounds);
  }
  const auto n = static_cast<double>(episodes);
  for (auto& v : res.returns) v /= n;
  for (auto& v : res.discounted) v /= n;
  res.mean_rounds /= n;
  return res;
}

// ---- Behaviour cloning ----------------------------------------------------

namespace {

struct BcRequest {
  std::vector<double> x;  // [s; 1]
  Tensor features;        // [pool, d]
  std::vector<char> shown;
  double w_pos = 0.0;
  double w_neg = 0.0;
};

double bc_loss(const std::vector<BcRequest>& data, const Tensor64& w, double l2, Tensor64* grad) {
  const std::int64_t d = w.rows();
  const std::int64_t in = w.cols();
  if (grad) *grad = Tensor64(w.shape());
  double loss = 0.0;
  std::vector<double> q(static_cast<std::size_t>(d));
  std::vector<double> gv(static_cast<std::size_t>(d));
  for (const auto& r : data) {
    for (std::int64_t i = 0; i < d; ++i) {
      double acc = 0.0;
      for (std::int64_t c = 0; c < in; ++c) acc += w.at(i, c) * r.x[static_cast<std::size_t>(c)];
      q[static_cast<std::size_t>(i)] = acc;
    }
    std::fill(gv.begin(), gv.end(), 0.0);
    for (std::int64_t j = 0; j < r.features.rows(); ++j) {
      auto v = r.features.row_span(j);
      double z = 0.0;
      for (std::int64_t i = 0; i < d; ++i) z += q[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)];
      const bool y = r.shown[static_cast<std::size_t>(j)] != 0;
      const double wt = y ? r.w_pos : r.w_neg;
      // log(1 + e^-z) for positives, log(1 + e^z) for negatives, stably.
      const double m = y ? -z : z;
      loss += wt * (m > 0.0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m)));
      if (grad) {
        const double p = 1.0 / (1.0 + std::exp(-z));
        const double coef = wt * (p - (y ? 1.0 : 0.0));
        for (std::int64_t i = 0; i < d; ++i) gv[static_cast<std::size_t>(i)] += coef * v[static_cast<std::size_t>(i)];
      }
    }
    if (grad) {
      for (std::int64_t i = 0; i < d; ++i) {
        for (std::int64_t c = 0; c < in; ++c) grad->at(i, c) += gv[static_cast<std::size_t>(i)] * r.x[static_cast<std::size_t>(c)];
      }
    }
  }
  const auto n = static_cast<double>(data.size());
  loss /= n;
  double sq = 0.0;
  for (double v : w.values()) sq += v * v;
  loss += 0.5 * l2 * sq;
  if (grad) {
    for (std::size_t k = 0; k < grad->values().size(); ++k) (*grad)[k] = (*grad)[k] / n + l2 * w[k];
  }
  return loss;
}

}  // namespace

BcResult train_bc(const TrajectoryLog& dataset, const BcConfig& config, const ItemCatalog& catalog) {
  config.validate();
  std::vector<BcRequest> data;
  for (const auto& s : dataset.sessions) {
    for (const auto& q : s.requests) {
      BcRequest r;
      r.x.assign(q.state.begin(), q.state.end());
      r.x.push_back(1.0);
      r.features = pool_features(catalog, q.pool);
      r.shown.assign(q.pool.size(), 0);
      for (auto id : q.shown) {
        auto it = std::find(q.pool.begin(), q.pool.end(), id);
        if (it == q.pool.end()) throw DataError("bc: shown item not in pool");
        r.shown[static_cast<std::size_t>(it - q.pool.begin())] = 1;
      }
      const auto pos = static_cast<double>(q.shown.size());
      const auto neg = static_cast<double>(q.pool.size()) - pos;
      if (pos == 0.0 || neg == 0.0) continue;
      r.w_pos = 0.5 / pos;
      r.w_neg = 0.5 / neg;
      data.push_back(std::move(r));
    }
  }
  if (data.empty()) throw DataError("train_bc: dataset has no usable requests");
  const std::int64_t width = static_cast<std::int64_t>(data.front().x.size());
  for (const auto& r : data) {
    if (static_cast<std::int64_t>(r.x.size()) != width) throw DataError("train_bc: state width varies across records");
  }

  Tensor64 w({catalog.embeddings.cols(), width});
  std::vector<double> history;
  Tensor64 grad;
  double loss = bc_loss(data, w, config.l2, &grad);
  history.push_back(loss);
  double lr = config.lr;
  for (std::int64_t e = 0; e < config.epochs; ++e) {
    bool accepted = false;
    for (int attempt = 0; attempt < 40 && !accepted; ++attempt) {
      Tensor64 cand = w;
      for (std::size_t k = 0; k < cand.values().size(); ++k) cand[k] -= lr * grad[k];
      const double cand_loss = bc_loss(data, cand, config.l2, nullptr);
      if (cand_loss <= loss) {
        w = std::move(cand);
        accepted = true;
        lr *= 1.25;
      } else {
        lr *= 0.5;
      }
    }
    loss = bc_loss(data, w, config.l2, &grad);
    history.push_back(loss);
  }

  BCPolicy policy(w);
  std::int64_t hit = 0;
  std::int64_t total = 0;
  for (const auto& s : dataset.sessions) {
    for (const auto& q : s.requests) {
      const Tensor feats = pool_features(catalog, q.pool);
      const auto sc = policy.scores(q.state, q.pool, feats);
      const auto top = top_k_positions(sc, q.pool, q.shown.size());
      for (auto pos : top) {
        if (std::find(q.shown.begin(), q.shown.end(), q.pool[pos]) != q.shown.end()) ++hit;
      }
      total += static_cast<std::int64_t>(q.shown.size());
    }
  }
  return BcResult{std::move(policy), std::move(history), total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0};
}

// ---- Reports --------------------------------------------------------------

std::string EvalReport::to_json() const {
  using nlohmann::ordered_json;
  ordered_json j;
  j["policy"] = policy;
  j["seed"] = seed;
  j["episodes"] = episodes;
  j["config_hash"] = config_hash;
  ordered_json aspects;
  for (int a = 0; a < kNumAspects; ++a) {
    ordered_json row = ordered_json::object();
    for (const auto& [family, values] : metrics) row[family] = values[static_cast<std::size_t>(a)];
    aspects[std::string(aspect_name(a))] = std::move(row);
  }
  j["aspects"] = std::move(aspects);
  j["notes"] = notes;
  return j.dump(2) + "\n";
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "aspect";
  for (const auto& [family, _] : metrics) out << "," << family;
  out << "\n";
  for (int a = 0; a < kNumAspects; ++a) {
    out << aspect_name(a);
    for (const auto& [_, values] : metrics) out << "," << num(values[static_cast<std::size_t>(a)]);
    out << "\n";
  }
  return out.str();
}

std::vector<MetricDelta> compare(const EvalReport& a, const EvalReport& b) {
  if (a.metrics.size() != b.metrics.size()) throw ContractError("compare: reports carry different metric sets");
  std::vector<MetricDelta> out;
  for (const auto& [family, va] : a.metrics) {
    auto it = b.metrics.find(family);
    if (it == b.metrics.end()) throw ContractError("compare: metric '" + family + "' missing from the second report");
    for (int k = 0; k < kNumAspects; ++k) {
      MetricDelta m;
      m.metric = family;
      m.aspect = std::string(aspect_name(k));
      m.a = va[static_cast<std::size_t>(k)];
      m.b = it->second[static_cast<std::size_t>(k)];
      m.delta = m.a - m.b;
      m.lift = m.b == 0.0 ? 0.0 : m.delta / std::abs(m.b);
      out.push_back(std::move(m));
    }
  }
  return out;
}

}  // namespace mmrf
