// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "mmrf/env.hpp"
#include "mmrf/nn.hpp"

namespace mmrf {

/// How each agent gathers information from its peers.
/// `concat` is the no-attention ablation: peers' embeddings are
/// concatenated and mapped through a per-agent linear layer.
enum class CollabMode { attention, concat };

std::string_view collab_mode_name(CollabMode mode);
CollabMode parse_collab_mode(std::string_view name);

struct AgentsConfig {
  int n_agents = kNumAspects;
  std::int64_t encoder_hidden = 64;
  std::int64_t embed_dim = 32;       // width of h
  std::int64_t attention_dim = 32;   // width of e (projection width)
  int heads = 4;
  bool scaled_attention = false;
  std::int64_t actor_hidden = 64;
  std::int64_t critic_embed = 32;
  std::int64_t critic_hidden = 64;
  double action_bound = 1.0;
  CollabMode collab = CollabMode::attention;

  void validate() const;
  bool operator==(const AgentsConfig&) const = default;
};

/// All policy and critic parameters in one store:
///   agent.{i}.encoder.*  agent.{i}.actor.*  agent.{i}.critic.*
///   agent.{i}.concat.*   shared_attn.{w_query,w_key,w_value}
/// plus a "target." copy of every entry for the bootstrap term.
class AgentBundle {
 public:
  AgentBundle(AgentsConfig config, std::int64_t state_dim, std::int64_t action_dim, Rng& rng);

  const AgentsConfig& config() const { return config_; }
  int size() const { return config_.n_agents; }
  int main_index() const { return config_.n_agents - 1; }
  /// Feedback aspect optimised by slot `i`; the last slot is WatchTime.
  int aspect_of(int i) const;
  std::int64_t state_dim() const { return state_dim_; }
  std::int64_t action_dim() const { return action_dim_; }

  ParamStore params;

  static std::string agent_prefix(int i) { return "agent." + std::to_string(i); }
  std::vector<std::string> actor_param_names() const;
  std::vector<std::string> critic_param_names(int i) const;
  /// Target copies overwritten with the online values.
  void sync_targets();

 private:
  AgentsConfig config_;
  std::int64_t state_dim_;
  std::int64_t action_dim_;
};

struct CollabContext {
  std::vector<Var> h;
  std::vector<Var> e;
  /// attention[i][head]: [B, N-1] weights over agent i's peers in index order.
  std::vector<std::vector<Var>> attention;
};

struct JointOutput {
  CollabContext context;
  std::vector<Var> aux_actions;  // N-1 entries
  Var main_action;

  /// Action of slot i (aux for i < N-1, main otherwise).
  Var action(int i) const { return i + 1 == static_cast<int>(context.h.size()) ? main_action : aux_actions[static_cast<std::size_t>(i)]; }
};

Var encode_state(const nn::Binder& p, const AgentBundle& bundle, int i, Var state);
/// Attentive collaboration over the shared projections; e_i excludes agent i.
CollabContext collaborate(const nn::Binder& p, const AgentBundle& bundle, const std::vector<Var>& h);
/// Ablation: e_i = linear_i(concat of peers' h).
CollabContext concat_context(const nn::Binder& p, const AgentBundle& bundle, const std::vector<Var>& h);
Var aux_action(const nn::Binder& p, const AgentBundle& bundle, int k, Var h_k, Var e_k);
Var main_action(const nn::Binder& p, const AgentBundle& bundle, Var h_main, const std::vector<Var>& e,
                const std::vector<Var>& aux_actions);
Var critic_value(const nn::Binder& p, const AgentBundle& bundle, int i, Var state, Var action);
JointOutput act_joint(const nn::Binder& p, const AgentBundle& bundle, Var state, CollabMode mode);

/// score_j = action · features_j for features [pool, d].
std::vector<float> score_items(std::span<const float> action, const Tensor& features);

/// Forward pass without gradient tracking for a single state.
struct JointAction {
  std::vector<std::vector<float>> aux;
  std::vector<float> main;
  std::vector<float> of(int i) const { return i < static_cast<int>(aux.size()) ? aux[static_cast<std::size_t>(i)] : main; }
};
JointAction act(const AgentBundle& bundle, std::span<const float> state, CollabMode mode,
                const std::string& prefix = "");

}  // namespace mmrf
