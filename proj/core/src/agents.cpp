// SPDX-License-Identifier: Apache-2.0
#include "mmrf/agents.hpp"

#include <cmath>

namespace mmrf {

using nn::Activation;
using nn::Binder;

std::string_view collab_mode_name(CollabMode mode) { return mode == CollabMode::attention ? "attention" : "concat"; }

CollabMode parse_collab_mode(std::string_view name) {
  if (name == "attention") return CollabMode::attention;
  if (name == "concat") return CollabMode::concat;
  throw ConfigError("collab mode must be 'attention' or 'concat', got '" + std::string(name) + "'");
}

void AgentsConfig::validate() const {
  auto require = [](bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError("agents." + key + ": " + what);
  };
  require(n_agents >= 2, "n_agents", "must be >= 2");
  require(n_agents <= kNumAspects, "n_agents", "must be <= " + std::to_string(kNumAspects));
  require(encoder_hidden >= 1 && embed_dim >= 1 && actor_hidden >= 1 && critic_embed >= 1 && critic_hidden >= 1,
          "widths", "all widths must be >= 1");
  require(heads >= 1, "heads", "must be >= 1");
  require(attention_dim % heads == 0, "heads", "must divide attention_dim");
  require(action_bound > 0.0 && std::isfinite(action_bound), "action_bound", "must be positive");
}

AgentBundle::AgentBundle(AgentsConfig config, std::int64_t state_dim, std::int64_t action_dim, Rng& rng)
    : config_(std::move(config)), state_dim_(state_dim), action_dim_(action_dim) {
  config_.validate();
  const int n = config_.n_agents;
  const auto& c = config_;
  for (int i = 0; i < n; ++i) {
    const std::string a = agent_prefix(i);
    nn::init_mlp(params, a + ".encoder", {state_dim, c.encoder_hidden, c.embed_dim}, rng);
    const std::int64_t actor_in = i == n - 1
                                      ? c.embed_dim + n * c.attention_dim + (n - 1) * action_dim
                                      : c.embed_dim + c.attention_dim;
    nn::init_mlp(params, a + ".actor", {actor_in, c.actor_hidden, action_dim}, rng);
    nn::init_mlp(params, a + ".critic.encoder", {state_dim, c.critic_embed}, rng);
    nn::init_mlp(params, a + ".critic.head", {c.critic_embed + action_dim, c.critic_hidden, 1}, rng);
    nn::init_linear(params, a + ".concat", (n - 1) * c.embed_dim, c.attention_dim, rng);
  }
  for (const char* w : {"w_query", "w_key", "w_value"}) {
    const double limit = std::sqrt(6.0 / static_cast<double>(c.embed_dim + c.attention_dim));
    Tensor t({c.attention_dim, c.embed_dim});
    for (auto& x : t.values()) x = static_cast<float>(rng.uniform(-limit, limit));
    params.set(std::string("shared_attn.") + w, std::move(t));
  }
  sync_targets();
}

int AgentBundle::aspect_of(int i) const {
  if (i < 0 || i >= config_.n_agents) throw ContractError("agent index out of range");
  return i == main_index() ? kWatchAspect : i;
}

std::vector<std::string> AgentBundle::actor_param_names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : params) {
    if (starts_with(name, "target.")) continue;
    if (starts_with(name, "shared_attn.")) {
      out.push_back(name);
      continue;
    }
    // Everything under agent.{i} except its critic.
    if (starts_with(name, "agent.") && name.find(".critic.") == std::string::npos) out.push_back(name);
  }
  return out;
}

std::vector<std::string> AgentBundle::critic_param_names(int i) const {
  std::vector<std::string> out;
  const std::string prefix = agent_prefix(i) + ".critic.";
  for (const auto& [name, _] : params) {
    if (starts_with(name, prefix)) out.push_back(name);
  }
  return out;
}

void AgentBundle::sync_targets() {
  std::vector<std::pair<std::string, Tensor>> copies;
  for (const auto& [name, t] : params) {
    if (!starts_with(name, "target.")) copies.emplace_back("target." + name, t);
  }
  for (auto& [name, t] : copies) params.set(name, std::move(t));
}

// ---------------------------------------------------------------------------

Var encode_state(const Binder& p, const AgentBundle& bundle, int i, Var state) {
  if (state.cols() != bundle.state_dim()) {
    throw DimensionError("encode_state: expected " + std::to_string(bundle.state_dim()) + " features, got " +
                         shape_str(state.shape()));
  }
  return nn::mlp(p, AgentBundle::agent_prefix(i) + ".encoder", 2, state, Activation::relu, Activation::tanh);
}

CollabContext collaborate(const Binder& p, const AgentBundle& bundle, const std::vector<Var>& h) {
  const int n = static_cast<int>(h.size());
  if (n < 2) throw ContractError("collaborate: need at least 2 agents, got " + std::to_string(n));
  for (const Var& x : h) {
    if (x.cols() != h.front().cols()) throw DimensionError("collaborate: embeddings differ in width");
  }
  // Each embedding is projected once and reused by every agent it is a peer of.
  const Var wq = p("shared_attn.w_query"), wk = p("shared_attn.w_key"), wv = p("shared_attn.w_value");
  std::vector<Var> q, k, v;
  for (const Var& x : h) {
    q.push_back(matmul_nt(x, wq));
    k.push_back(matmul_nt(x, wk));
    v.push_back(relu(matmul_nt(x, wv)));
  }
  CollabContext ctx;
  ctx.h = h;
  for (int i = 0; i < n; ++i) {
    std::vector<Var> pk, pv;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      pk.push_back(k[static_cast<std::size_t>(j)]);
      pv.push_back(v[static_cast<std::size_t>(j)]);
    }
    auto res = nn::attend(q[static_cast<std::size_t>(i)], pk, pv, bundle.config().heads, bundle.config().scaled_attention);
    ctx.e.push_back(res.context);
    ctx.attention.push_back(std::move(res.weights));
  }
  return ctx;
}

CollabContext concat_context(const Binder& p, const AgentBundle& bundle, const std::vector<Var>& h) {
  (void)bundle;
  const int n = static_cast<int>(h.size());
  if (n < 2) throw ContractError("concat_context: need at least 2 agents, got " + std::to_string(n));
  CollabContext ctx;
  ctx.h = h;
  for (int i = 0; i < n; ++i) {
    std::vector<Var> peers;
    for (int j = 0; j < n; ++j) {
      if (j != i) peers.push_back(h[static_cast<std::size_t>(j)]);
    }
    ctx.e.push_back(nn::linear(p, AgentBundle::agent_prefix(i) + ".concat", concat_cols(peers)));
  }
  return ctx;
}

Var aux_action(const Binder& p, const AgentBundle& bundle, int k, Var h_k, Var e_k) {
  if (k < 0 || k >= bundle.main_index()) {
    throw ContractError("aux_action: index " + std::to_string(k) + " is not an auxiliary agent");
  }
  Var y = nn::mlp(p, AgentBundle::agent_prefix(k) + ".actor", 2, concat_cols({h_k, e_k}), Activation::relu,
                  Activation::tanh);
  return bundle.config().action_bound == 1.0 ? y : scale(y, bundle.config().action_bound);
}

Var main_action(const Binder& p, const AgentBundle& bundle, Var h_main, const std::vector<Var>& e,
                const std::vector<Var>& aux_actions) {
  const int n = bundle.size();
  if (static_cast<int>(aux_actions.size()) != n - 1) {
    throw ContractError("main_action: expected " + std::to_string(n - 1) + " auxiliary actions, got " +
                        std::to_string(aux_actions.size()));
  }
  if (static_cast<int>(e.size()) != n) {
    throw ContractError("main_action: expected " + std::to_string(n) + " context vectors, got " +
                        std::to_string(e.size()));
  }
  std::vector<Var> parts{h_main};
  parts.insert(parts.end(), e.begin(), e.end());
  parts.insert(parts.end(), aux_actions.begin(), aux_actions.end());
  Var y = nn::mlp(p, AgentBundle::agent_prefix(bundle.main_index()) + ".actor", 2, concat_cols(parts),
                  Activation::relu, Activation::tanh);
  return bundle.config().action_bound == 1.0 ? y : scale(y, bundle.config().action_bound);
}

Var critic_value(const Binder& p, const AgentBundle& bundle, int i, Var state, Var action) {
  if (state.cols() != bundle.state_dim() || action.cols() != bundle.action_dim() || state.rows() != action.rows()) {
    throw DimensionError("critic_value: state " + shape_str(state.shape()) + " / action " +
                         shape_str(action.shape()) + " do not match the bundle");
  }
  const std::string a = AgentBundle::agent_prefix(i) + ".critic";
  Var z = nn::mlp(p, a + ".encoder", 1, state, Activation::relu, Activation::relu);
  return nn::mlp(p, a + ".head", 2, concat_cols({z, action}), Activation::relu, Activation::identity);
}

JointOutput act_joint(const Binder& p, const AgentBundle& bundle, Var state, CollabMode mode) {
  const int n = bundle.size();
  std::vector<Var> h;
  for (int i = 0; i < n; ++i) h.push_back(encode_state(p, bundle, i, state));
  JointOutput out;
  out.context = mode == CollabMode::attention ? collaborate(p, bundle, h) : concat_context(p, bundle, h);
  for (int k = 0; k + 1 < n; ++k) {
    out.aux_actions.push_back(
        aux_action(p, bundle, k, out.context.h[static_cast<std::size_t>(k)], out.context.e[static_cast<std::size_t>(k)]));
  }
  out.main_action = main_action(p, bundle, out.context.h.back(), out.context.e, out.aux_actions);
  return out;
}

std::vector<float> score_items(std::span<const float> action, const Tensor& features) {
  if (features.cols() != static_cast<std::int64_t>(action.size())) {
    throw DimensionError("score_items: action width " + std::to_string(action.size()) + " vs item features " +
                         shape_str(features.shape()));
  }
  std::vector<float> out(static_cast<std::size_t>(features.rows()));
  for (std::int64_t r = 0; r < features.rows(); ++r) {
    auto row = features.row_span(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < action.size(); ++c) acc += static_cast<double>(action[c]) * row[c];
    out[static_cast<std::size_t>(r)] = static_cast<float>(acc);
  }
  return out;
}

JointAction act(const AgentBundle& bundle, std::span<const float> state, CollabMode mode, const std::string& prefix) {
  Graph g;
  const Binder p{g, bundle.params, false, prefix};
  Var s = g.constant(Tensor64::row(std::vector<double>(state.begin(), state.end())));
  const JointOutput out = act_joint(p, bundle, s, mode);
  auto to_float = [](const Var& v) {
    std::vector<float> r(v.value().values().begin(), v.value().values().end());
    return r;
  };
  JointAction ja;
  for (const auto& a : out.aux_actions) ja.aux.push_back(to_float(a));
  ja.main = to_float(out.main_action);
  return ja;
}

}  // namespace mmrf
