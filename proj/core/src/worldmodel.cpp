// SPDX-License-Identifier: Apache-2.0
#include "mmrf/worldmodel.hpp"

#include <algorithm>
#include <cmath>

namespace mmrf {

namespace {

const std::string kPrefix = "worldmodel";

double clamp_prob(double r) { return std::clamp(r, kProbClamp, 1.0 - kProbClamp); }

}  // namespace

void WorldModelConfig::validate() const {
  auto require = [](bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError("worldmodel." + key + ": " + what);
  };
  require(proj_dim >= 1, "proj_dim", "must be >= 1");
  require(hidden >= 1, "hidden", "must be >= 1");
  require(head_hidden >= 1, "head_hidden", "must be >= 1");
  require(lambda >= 0.0 && std::isfinite(lambda), "lambda", "must be >= 0");
  require(dropout >= 0.0 && dropout < 1.0, "dropout", "must lie in [0, 1)");
  require(lr >= 0.0 && std::isfinite(lr), "lr", "must be >= 0");
  require(batch_sessions >= 1, "batch_sessions", "must be >= 1");
  require(updates_per_epoch >= 0, "updates_per_epoch", "must be >= 0");
  require(capacity_sessions >= 1, "capacity_sessions", "must be >= 1");
}

WorldModel::WorldModel(WorldModelConfig config, std::int64_t state_dim, std::int64_t item_dim, Rng& rng)
    : config_(std::move(config)), state_dim_(state_dim), item_dim_(item_dim) {
  config_.validate();
  nn::init_linear(params, kPrefix + ".proj", input_dim(), config_.proj_dim, rng);
  nn::init_gru(params, kPrefix + ".gru", config_.proj_dim, config_.hidden, rng);
  nn::init_mlp(params, kPrefix + ".pred_a", {config_.hidden, config_.head_hidden, kNumAspects}, rng);
  nn::init_mlp(params, kPrefix + ".pred_b", {config_.hidden, config_.head_hidden, kNumAspects}, rng);
  opt = AdamState::for_prefix(params, kPrefix + ".");
}

std::vector<float> slate_features(const ItemCatalog& catalog, std::span<const std::int64_t> items,
                                  std::span<const float> action) {
  const std::int64_t d = catalog.embeddings.cols();
  if (static_cast<std::int64_t>(action.size()) != d) {
    throw DimensionError("slate_features: action width " + std::to_string(action.size()) + ", expected " +
                         std::to_string(d));
  }
  if (items.empty()) throw ContractError("slate_features: empty slate");
  std::vector<double> acc(static_cast<std::size_t>(d), 0.0);
  for (auto id : items) {
    if (id < 0 || id >= catalog.embeddings.rows()) throw ContractError("slate_features: item id out of range");
    auto row = catalog.embeddings.row_span(id);
    for (std::int64_t c = 0; c < d; ++c) acc[static_cast<std::size_t>(c)] += row[static_cast<std::size_t>(c)];
  }
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(2 * d));
  for (double v : acc) out.push_back(static_cast<float>(v / static_cast<double>(items.size())));
  out.insert(out.end(), action.begin(), action.end());
  return out;
}

AspectVector feedback_targets(std::span<const ItemFeedback> feedback) {
  if (feedback.empty()) throw ContractError("feedback_targets: empty slate");
  AspectVector t{};
  for (const auto& f : feedback) {
    AspectVector v = f.as_vector();
    v[kWatchAspect] = f.watch_ratio;
    for (int a = 0; a < kNumAspects; ++a) t[static_cast<std::size_t>(a)] += v[static_cast<std::size_t>(a)];
  }
  for (auto& x : t) x /= static_cast<double>(feedback.size());
  return t;
}

WmStepVars wm_step(const nn::Binder& p, const WorldModel& model, Var hidden, Var input, Rng& rng, bool train) {
  if (input.cols() != model.input_dim()) {
    throw DimensionError("worldmodel: input width " + std::to_string(input.cols()) + ", expected " +
                         std::to_string(model.input_dim()));
  }
  if (hidden.cols() != model.config().hidden || hidden.rows() != input.rows()) {
    throw DimensionError("worldmodel: hidden shape " + shape_str(hidden.shape()));
  }
  const double rho = model.config().dropout;
  Var x = relu(nn::linear(p, kPrefix + ".proj", input));
  Var h = nn::gru_step(p, kPrefix + ".gru", hidden, x);
  Var pa = sigmoid(nn::mlp(p, kPrefix + ".pred_a", 2, h, nn::Activation::relu, nn::Activation::identity));
  Var zb = nn::dropout(h, rho, rng, train);
  zb = relu(nn::linear(p, kPrefix + ".pred_b.layer0", zb));
  zb = nn::dropout(zb, rho, rng, train);
  Var pb = sigmoid(nn::linear(p, kPrefix + ".pred_b.layer1", zb));
  return {h, pa, pb};
}

WmPrediction wm_observe(const WorldModel& model, std::span<const double> hidden, std::span<const float> state,
                        std::span<const float> slate, Rng& rng) {
  if (static_cast<std::int64_t>(state.size()) != model.state_dim() ||
      static_cast<std::int64_t>(slate.size()) != model.slate_dim()) {
    throw DimensionError("wm_observe: state " + std::to_string(state.size()) + " / slate " +
                         std::to_string(slate.size()) + " do not match the model");
  }
  Graph g;
  const nn::Binder p{g, model.params, false, ""};
  std::vector<double> in(state.begin(), state.end());
  in.insert(in.end(), slate.begin(), slate.end());
  Var h0 = g.constant(Tensor64::row(std::vector<double>(hidden.begin(), hidden.end())));
  const auto out = wm_step(p, model, h0, g.constant(Tensor64::row(std::move(in))), rng, true);
  WmPrediction r;
  for (int a = 0; a < kNumAspects; ++a) {
    r.a[static_cast<std::size_t>(a)] = out.pred_a.value()[static_cast<std::size_t>(a)];
    r.b[static_cast<std::size_t>(a)] = out.pred_b.value()[static_cast<std::size_t>(a)];
  }
  r.hidden.assign(out.hidden.value().values().begin(), out.hidden.value().values().end());
  return r;
}

double wm_loss(std::span<const AspectVector> predictions, const AspectVector& targets) {
  for (double t : targets) {
    if (!(t >= 0.0 && t <= 1.0)) throw ContractError("wm_loss: target outside [0, 1]");
  }
  double loss = 0.0;
  for (const auto& pred : predictions) {
    for (int a = 0; a < kNumAspects; ++a) {
      const double e = pred[static_cast<std::size_t>(a)] - targets[static_cast<std::size_t>(a)];
      loss += e * e;
    }
  }
  return loss;
}

Var wm_loss(Var pred_a, Var pred_b, Var targets) {
  for (double t : targets.value().values()) {
    if (!(t >= 0.0 && t <= 1.0)) throw ContractError("wm_loss: target outside [0, 1]");
  }
  return add(sum(square(sub(pred_a, targets))), sum(square(sub(pred_b, targets))));
}

double uncertainty_multiplier(double r_a, double r_b, double lambda) {
  const double a = clamp_prob(r_a);
  const double b = clamp_prob(r_b);
  const double kl = a * std::log(a / b) + (1.0 - a) * std::log((1.0 - a) / (1.0 - b));
  return std::exp(lambda * std::max(kl, 0.0));
}

double simulated_value(double r_a, double r_b, double lambda) {
  return 0.5 * (r_a + r_b) * uncertainty_multiplier(r_a, r_b, lambda);
}

double simulate_reward(const WmPrediction& prediction, int aspect, double lambda) {
  if (aspect < 0 || aspect >= kNumAspects) throw ContractError("simulate_reward: aspect out of range");
  const auto i = static_cast<std::size_t>(aspect);
  const double r = simulated_value(prediction.a[i], prediction.b[i], lambda);
  return aspect == kHateAspect ? -r : r;
}

double denormalize_reward(int aspect, double value, std::int64_t k, double mean_duration) {
  const double scale = static_cast<double>(k) * (aspect == kWatchAspect ? mean_duration : 1.0);
  return value * scale;
}

// ---------------------------------------------------------------------------

WmSequenceBuffer::WmSequenceBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("worldmodel sequence buffer capacity must be >= 1");
}

void WmSequenceBuffer::push(WmSequence sequence) {
  if (sequence.empty()) return;
  for (const auto& s : sequence) {
    if (!s.impression) throw ContractError("worldmodel buffer: simulated sample offered as training data");
  }
  if (items_.size() < capacity_) {
    items_.push_back(std::move(sequence));
    return;
  }
  items_[head_] = std::move(sequence);
  head_ = (head_ + 1) % capacity_;
}

std::vector<const WmSequence*> WmSequenceBuffer::sample(std::size_t n, Rng& rng) const {
  if (items_.empty()) throw ContractError("worldmodel buffer: nothing to sample");
  std::vector<const WmSequence*> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(&items_[rng.below(items_.size())]);
  return out;
}

namespace {

struct Unrolled {
  Var loss;           // summed masked loss
  std::size_t steps;  // valid (sequence, step) pairs
  std::vector<Var> pred_a;
  std::vector<Tensor64> targets;
  std::vector<Tensor64> masks;
};

Unrolled unroll(const nn::Binder& p, const WorldModel& model, std::span<const WmSequence* const> batch, Rng& rng,
                bool train) {
  Graph& g = p.graph;
  const auto b = static_cast<std::int64_t>(batch.size());
  std::size_t len = 0;
  for (const auto* s : batch) len = std::max(len, s->size());
  const std::int64_t width = model.input_dim();
  Var h = g.constant(Tensor64({b, model.config().hidden}));
  Unrolled u;
  u.steps = 0;
  for (std::size_t t = 0; t < len; ++t) {
    Tensor64 in({b, width});
    Tensor64 tgt({b, kNumAspects});
    Tensor64 mask({b, kNumAspects});
    for (std::int64_t r = 0; r < b; ++r) {
      const auto& seq = *batch[static_cast<std::size_t>(r)];
      if (t >= seq.size()) continue;
      const WmStep& s = seq[t];
      if (!s.impression) throw ContractError("worldmodel update: simulated sample in training batch");
      if (static_cast<std::int64_t>(s.state.size() + s.slate.size()) != width) {
        throw DimensionError("worldmodel update: step width mismatch");
      }
      std::int64_t c = 0;
      for (float v : s.state) in.at(r, c++) = v;
      for (float v : s.slate) in.at(r, c++) = v;
      for (int a = 0; a < kNumAspects; ++a) {
        const double y = s.targets[static_cast<std::size_t>(a)];
        if (!(y >= 0.0 && y <= 1.0)) throw ContractError("wm_loss: target outside [0, 1]");
        tgt.at(r, a) = y;
        mask.at(r, a) = 1.0;
      }
      ++u.steps;
    }
    const auto out = wm_step(p, model, h, g.constant(std::move(in)), rng, train);
    h = out.hidden;
    Var y = g.constant(tgt);
    Var la = sum(square(mul_const(sub(out.pred_a, y), mask)));
    Var lb = sum(square(mul_const(sub(out.pred_b, y), mask)));
    Var step_loss = add(la, lb);
    u.loss = u.loss.valid() ? add(u.loss, step_loss) : step_loss;
    u.pred_a.push_back(out.pred_a);
    u.targets.push_back(std::move(tgt));
    u.masks.push_back(std::move(mask));
  }
  return u;
}

}  // namespace

double wm_update(WorldModel& model, std::span<const WmSequence* const> batch, double lr, Rng& rng) {
  if (batch.empty()) throw ContractError("wm_update: empty batch");
  Graph g;
  const nn::Binder p{g, model.params, true, ""};
  Unrolled u = unroll(p, model, batch, rng, true);
  if (u.steps == 0) throw ContractError("wm_update: batch holds no steps");
  Var loss = scale(u.loss, 1.0 / static_cast<double>(u.steps));
  g.backward(loss);
  adam_step(model.params, g.param_grads(), model.opt, lr);
  return loss.value()[0];
}

AspectVector wm_mse(const WorldModel& model, std::span<const WmSequence* const> sequences) {
  if (sequences.empty()) throw ContractError("wm_mse: no sequences");
  Graph g;
  const nn::Binder p{g, model.params, false, ""};
  Rng rng(0);
  const Unrolled u = unroll(p, model, sequences, rng, false);
  AspectVector se{};
  for (std::size_t t = 0; t < u.pred_a.size(); ++t) {
    const auto& pa = u.pred_a[t].value();
    for (std::int64_t r = 0; r < pa.rows(); ++r) {
      if (u.masks[t].at(r, 0) == 0.0) continue;
      for (int a = 0; a < kNumAspects; ++a) {
        const double e = pa.at(r, a) - u.targets[t].at(r, a);
        se[static_cast<std::size_t>(a)] += e * e;
      }
    }
  }
  for (auto& x : se) x /= static_cast<double>(std::max<std::size_t>(1, u.steps));
  return se;
}

}  // namespace mmrf
