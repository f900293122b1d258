// SPDX-License-Identifier: Apache-2.0
#include "mmrf/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "mmrf/parallel.hpp"
#include "mmrf/ranking.hpp"

namespace mmrf {

std::string_view nonimpression_mode_name(NonImpressionMode mode) {
  switch (mode) {
    case NonImpressionMode::simulated: return "simulated";
    case NonImpressionMode::disabled: return "disabled";
    case NonImpressionMode::constant: return "constant";
  }
  return "simulated";
}

NonImpressionMode parse_nonimpression_mode(std::string_view name) {
  if (name == "simulated") return NonImpressionMode::simulated;
  if (name == "disabled") return NonImpressionMode::disabled;
  if (name == "constant") return NonImpressionMode::constant;
  throw ConfigError("training.nonimpression: expected simulated, disabled or constant, got '" + std::string(name) +
                    "'");
}

void TrainingConfig::validate() const {
  auto require = [](bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError("training." + key + ": " + what);
  };
  require(gamma >= 0.0 && gamma < 1.0, "gamma", "must lie in [0, 1)");
  require(critic_lr > 0.0 && std::isfinite(critic_lr), "critic_lr", "must be > 0");
  require(actor_lr >= 0.0 && std::isfinite(actor_lr), "actor_lr", "must be >= 0");
  require(aux_lr >= 0.0 && std::isfinite(aux_lr), "aux_lr", "must be >= 0");
  require(noise >= 0.0 && std::isfinite(noise), "noise", "must be >= 0");
  require(action_l2 >= 0.0 && std::isfinite(action_l2), "action_l2", "must be >= 0");
  require(tau > 0.0 && tau <= 1.0, "tau", "must lie in (0, 1]");
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(random_actions >= 0, "random_actions", "must be >= 0");
  require(nonimpression_rate >= 0.0 && nonimpression_rate <= 1.0, "nonimpression_rate", "must lie in [0, 1]");
  require(real_fraction > 0.0 && real_fraction <= 1.0, "real_fraction", "must lie in (0, 1]");
  require(buffer_capacity >= 1, "buffer_capacity", "must be >= 1");
  require(epochs >= 0, "epochs", "must be >= 0");
  require(sessions_per_epoch >= 1, "sessions_per_epoch", "must be >= 1");
  require(updates_per_epoch >= 0, "updates_per_epoch", "must be >= 0");
  require(plateau_patience >= 0, "plateau_patience", "must be >= 0");
  require(std::isfinite(constant_reward), "constant_reward", "must be finite");
  for (double s : reward_scale) require(s > 0.0 && std::isfinite(s), "reward_scale", "entries must be > 0");
}

// ---------------------------------------------------------------------------

std::vector<CandidateSlate> sample_nonimpression(const CandidatePool& pool, std::int64_t k, double bound,
                                                 std::int64_t m, double rate, Rng& rng) {
  if (m < 0) throw ContractError("sample_nonimpression: m must be >= 0");
  if (!(rate >= 0.0 && rate <= 1.0)) throw ContractError("sample_nonimpression: rate must lie in [0, 1]");
  std::vector<CandidateSlate> out;
  const auto d = static_cast<std::size_t>(pool.features.cols());
  for (std::int64_t j = 0; j < m; ++j) {
    CandidateSlate slate;
    slate.action.resize(d);
    for (auto& a : slate.action) a = static_cast<float>(rng.uniform(-bound, bound));
    const bool keep = rng.bernoulli(rate);
    if (!keep) continue;
    const auto scores = score_items(slate.action, pool.features);
    for (auto pos : top_k_positions(scores, pool.ids, static_cast<std::size_t>(k))) slate.items.push_back(pool.ids[pos]);
    out.push_back(std::move(slate));
  }
  return out;
}

namespace {

double mean_duration(const ItemCatalog& catalog, std::span<const std::int64_t> items) {
  double s = 0.0;
  for (auto id : items) s += catalog.durations[static_cast<std::size_t>(id)];
  return items.empty() ? 0.0 : s / static_cast<double>(items.size());
}

Tensor64 stack_rows(std::span<const std::vector<float>* const> rows) {
  if (rows.empty()) throw ContractError("empty batch");
  const auto w = static_cast<std::int64_t>(rows.front()->size());
  Tensor64 t({static_cast<std::int64_t>(rows.size()), w});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (static_cast<std::int64_t>(rows[r]->size()) != w) throw DimensionError("ragged batch rows");
    for (std::int64_t c = 0; c < w; ++c) t.at(static_cast<std::int64_t>(r), c) = (*rows[r])[static_cast<std::size_t>(c)];
  }
  return t;
}

template <class F>
Tensor64 gather(std::span<const Transition* const> batch, F&& pick) {
  std::vector<const std::vector<float>*> rows;
  rows.reserve(batch.size());
  for (const auto* t : batch) rows.push_back(&pick(*t));
  return stack_rows(rows);
}

void check_batch(std::span<const Transition* const> batch, const char* what) {
  if (batch.empty()) throw ContractError(std::string(what) + ": empty batch");
}

/// Target-network bootstrap values Q'_i(s', pi'_i(s')) for several agents
/// sharing the same next states.
std::vector<std::vector<double>> bootstrap_values(const AgentBundle& bundle, std::span<const int> agents,
                                                  const Tensor64& next_states) {
  Graph g;
  const nn::Binder p{g, bundle.params, false, "target."};
  Var s = g.constant(next_states);
  const JointOutput out = act_joint(p, bundle, s, bundle.config().collab);
  std::vector<std::vector<double>> values;
  for (int i : agents) {
    Var q = critic_value(p, bundle, i, s, out.action(i));
    values.emplace_back(q.value().values().begin(), q.value().values().end());
  }
  return values;
}

std::vector<double> targets_from(std::span<const Transition* const> batch, const std::vector<double>& bootstrap,
                                 double gamma) {
  std::vector<double> y(batch.size());
  for (std::size_t r = 0; r < batch.size(); ++r) {
    const Transition& t = *batch[r];
    y[r] = t.reward + (t.done ? 0.0 : gamma * bootstrap[r]);
  }
  return y;
}

void zero_fill(GradStore& grads, const ParamStore& store, const std::vector<std::string>& names) {
  for (const auto& n : names) {
    if (!grads.contains(n)) grads.emplace(n, Tensor64(store.at(n).shape()));
  }
}

AdamState& group(OptState& opt, const std::string& name, const ParamStore& store,
                 const std::vector<std::string>& names) {
  auto it = opt.groups.find(name);
  if (it == opt.groups.end()) it = opt.groups.emplace(name, AdamState::for_names(store, names)).first;
  return it->second;
}

double norm_where(const GradStore& grads, const std::string& prefix, bool exclude_critic) {
  double s = 0.0;
  for (const auto& [name, g] : grads) {
    if (!starts_with(name, prefix)) continue;
    if (exclude_critic && name.find(".critic.") != std::string::npos) continue;
    for (double v : g.values()) s += v * v;
  }
  return std::sqrt(s);
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

SessionRollout collect_rollout(const Environment& env, const AgentBundle& bundle, const TrainingConfig& config,
                               const WorldModel* model, Rng& rng) {
  Rng env_rng = rng.split("env");
  Rng noise_rng = rng.split("noise");
  Rng ni_rng = rng.split("nonimpression");
  Rng wm_rng = rng.split("worldmodel");
  const auto& ec = env.config();
  const int n = bundle.size();
  const double bound = bundle.config().action_bound;
  const bool track = model != nullptr && config.nonimpression == NonImpressionMode::simulated;
  const bool sample_slates = config.nonimpression != NonImpressionMode::disabled;

  SessionRollout out;
  out.transitions.resize(static_cast<std::size_t>(n));
  Session session = env.begin_session(env_rng);
  env.candidate_pool(session, env_rng);
  std::vector<double> hidden = track ? model->initial_hidden() : std::vector<double>{};

  while (!session.done) {
    const std::vector<float> state = session.state.features();
    const JointAction ja = act(bundle, state, bundle.config().collab);
    std::vector<std::vector<float>> actions(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      auto a = ja.of(i);
      for (auto& x : a) {
        const double noisy = x + (config.noise > 0.0 ? config.noise * noise_rng.normal() : 0.0);
        x = static_cast<float>(std::clamp(noisy, -bound, bound));
      }
      actions[static_cast<std::size_t>(i)] = std::move(a);
    }
    const auto& main = actions.back();
    const auto scores = score_items(main, session.pool.features);
    std::vector<CandidateSlate> slates;
    if (sample_slates) {
      slates = sample_nonimpression(session.pool, ec.k, bound, config.random_actions, config.nonimpression_rate,
                                    ni_rng);
    }

    const StepResult step = env.step(session, scores, env_rng);
    if (!session.done) env.candidate_pool(session, env_rng);
    const std::vector<float> next = session.state.features();

    for (int i = 0; i < n; ++i) {
      const auto aspect = static_cast<std::size_t>(bundle.aspect_of(i));
      out.transitions[static_cast<std::size_t>(i)].push_back(Transition{
          state, actions[static_cast<std::size_t>(i)], config.reward_scale[aspect] * step.reward[aspect], next,
          step.done, true, i});
    }
    WmStep ws{state, slate_features(env.catalog(), step.log.shown, main), feedback_targets(step.log.feedback), true};
    for (auto& slate : slates) {
      NonImpressionSample s;
      s.state = state;
      s.next_state = next;
      s.done = step.done;
      s.features = slate_features(env.catalog(), slate.items, slate.action);
      s.mean_duration = mean_duration(env.catalog(), slate.items);
      s.hidden = hidden;
      s.slate = std::move(slate);
      out.nonimpressions.push_back(std::move(s));
    }
    if (track) hidden = wm_observe(*model, hidden, ws.state, ws.slate, wm_rng).hidden;
    out.sequence.push_back(std::move(ws));
    for (int a = 0; a < kNumAspects; ++a) out.returns[static_cast<std::size_t>(a)] += step.reward[static_cast<std::size_t>(a)];
    ++out.rounds;
  }
  return out;
}

std::size_t simulate_and_store(const WorldModel* model, std::span<const NonImpressionSample> samples,
                               const AgentBundle& bundle, const TrainingConfig& config, std::int64_t k,
                               std::vector<ReplayBuffer>& sim_buffers, Rng& rng) {
  if (config.nonimpression == NonImpressionMode::disabled) return 0;
  const int n = bundle.size();
  if (static_cast<int>(sim_buffers.size()) != n) throw ContractError("simulate_and_store: one buffer per agent required");
  if (config.nonimpression == NonImpressionMode::simulated && model == nullptr) {
    throw ConfigError("training.nonimpression: simulated mode needs a world model");
  }
  for (const auto& s : samples) {
    std::optional<WmPrediction> pred;
    if (config.nonimpression == NonImpressionMode::simulated) {
      pred = wm_observe(*model, s.hidden, s.state, s.features, rng);
    }
    for (int i = 0; i < n; ++i) {
      double r = config.constant_reward;
      if (pred) {
        const int aspect = bundle.aspect_of(i);
        const double v = simulate_reward(*pred, aspect, model->config().lambda);
        r = config.reward_scale[static_cast<std::size_t>(aspect)] * denormalize_reward(aspect, v, k, s.mean_duration);
      }
      sim_buffers[static_cast<std::size_t>(i)].push(
          Transition{s.state, s.slate.action, r, s.next_state, s.done, false, i});
    }
  }
  return samples.size();
}

std::vector<double> td_targets(const AgentBundle& bundle, int agent, std::span<const Transition* const> batch,
                               double gamma) {
  check_batch(batch, "td_targets");
  const int agents[] = {agent};
  const auto boot = bootstrap_values(bundle, agents, gather(batch, [](const Transition& t) -> const auto& {
                                       return t.next_state;
                                     }));
  return targets_from(batch, boot.front(), gamma);
}

std::vector<double> td_errors(const AgentBundle& bundle, int agent, std::span<const Transition* const> batch,
                              double gamma) {
  const auto y = td_targets(bundle, agent, batch, gamma);
  Graph g;
  const nn::Binder p{g, bundle.params, false, ""};
  Var q = critic_value(p, bundle, agent, g.constant(gather(batch, [](const Transition& t) -> const auto& { return t.state; })),
                       g.constant(gather(batch, [](const Transition& t) -> const auto& { return t.action; })));
  std::vector<double> delta(batch.size());
  for (std::size_t r = 0; r < batch.size(); ++r) delta[r] = y[r] - q.value()[r];
  return delta;
}

double td_error(const AgentBundle& bundle, int agent, const Transition& t, double gamma) {
  const Transition* one[] = {&t};
  return td_errors(bundle, agent, one, gamma).front();
}

CriticStep critic_gradients(const AgentBundle& bundle, int agent, std::span<const Transition* const> batch,
                            std::span<const double> targets) {
  check_batch(batch, "update_critic");
  if (targets.size() != batch.size()) throw DimensionError("update_critic: targets and batch differ in length");
  Graph g;
  const nn::Binder p{g, bundle.params, true, ""};
  Var s = g.constant(gather(batch, [](const Transition& t) -> const auto& { return t.state; }));
  Var a = g.constant(gather(batch, [](const Transition& t) -> const auto& { return t.action; }));
  Var q = critic_value(p, bundle, agent, s, a);
  Tensor64 y({static_cast<std::int64_t>(batch.size()), 1});
  for (std::size_t r = 0; r < batch.size(); ++r) y[r] = targets[r];
  Var loss = scale(sum(square(sub(q, g.constant(std::move(y))))), 0.5 / static_cast<double>(batch.size()));
  g.backward(loss);
  return {loss.value()[0], g.param_grads()};
}

double update_critic(AgentBundle& bundle, OptState& opt, int agent, std::span<const Transition* const> batch,
                     double gamma, double lr) {
  const auto y = td_targets(bundle, agent, batch, gamma);
  CriticStep step = critic_gradients(bundle, agent, batch, y);
  const auto names = bundle.critic_param_names(agent);
  zero_fill(step.grads, bundle.params, names);
  adam_step(bundle.params, step.grads, group(opt, "critic." + std::to_string(agent), bundle.params, names), lr);
  return step.loss;
}

ActorStep actor_gradients(const AgentBundle& bundle, std::span<const std::vector<float>* const> states,
                          double alpha_main, double beta_aux, double action_l2) {
  if (states.empty()) throw ContractError("update_actors: empty batch");
  const int n = bundle.size();
  ActorStep step;
  step.actor_grad_norm.assign(static_cast<std::size_t>(n), 0.0);
  step.critic_grad_norm.assign(static_cast<std::size_t>(n), 0.0);
  if (alpha_main == 0.0 && beta_aux == 0.0) return step;

  Graph g;
  const nn::Binder p{g, bundle.params, true, ""};
  Var s = g.constant(stack_rows(states));
  const JointOutput out = act_joint(p, bundle, s, bundle.config().collab);
  const double inv_b = 1.0 / static_cast<double>(states.size());
  Var objective;
  auto accumulate = [&](Var term) { objective = objective.valid() ? add(objective, term) : term; };
  auto penalise = [&](Var action, double weight) {
    if (action_l2 > 0.0) accumulate(scale(sum(square(action)), -weight * action_l2 * inv_b));
  };
  if (alpha_main != 0.0) {
    Var q = critic_value(p, bundle, bundle.main_index(), s, out.main_action);
    step.main_value = sum(q).value()[0] * inv_b;
    accumulate(scale(sum(q), alpha_main * inv_b));
    penalise(out.main_action, alpha_main);
  }
  if (beta_aux != 0.0) {
    for (int k = 0; k < bundle.main_index(); ++k) {
      Var q = critic_value(p, bundle, k, s, out.aux_actions[static_cast<std::size_t>(k)]);
      accumulate(scale(sum(q), beta_aux * inv_b));
      penalise(out.aux_actions[static_cast<std::size_t>(k)], beta_aux);
    }
  }
  g.backward(scale(objective, -1.0));
  step.grads = g.param_grads();
  for (int i = 0; i < n; ++i) {
    const std::string prefix = AgentBundle::agent_prefix(i) + ".";
    step.actor_grad_norm[static_cast<std::size_t>(i)] = norm_where(step.grads, prefix, true);
    step.critic_grad_norm[static_cast<std::size_t>(i)] = norm_where(step.grads, prefix + "critic.", false);
  }
  return step;
}

ActorStep update_actors(AgentBundle& bundle, OptState& opt, std::span<const std::vector<float>* const> states,
                        double alpha_main, double beta_aux, double action_l2) {
  if (states.empty()) throw ContractError("update_actors: empty batch");
  const double lr = alpha_main > 0.0 ? alpha_main : beta_aux;
  if (lr <= 0.0) return actor_gradients(bundle, states, 0.0, 0.0);
  ActorStep step = actor_gradients(bundle, states, alpha_main / lr, beta_aux / lr, action_l2);
  const auto names = bundle.actor_param_names();
  zero_fill(step.grads, bundle.params, names);
  adam_step(bundle.params, step.grads, group(opt, "actors", bundle.params, names), lr);
  return step;
}

void polyak_update(AgentBundle& bundle, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ContractError("polyak_update: tau must lie in (0, 1]");
  std::vector<std::string> online;
  for (const auto& [name, _] : bundle.params) {
    if (!starts_with(name, "target.")) online.push_back(name);
  }
  for (const auto& name : online) {
    const Tensor& src = bundle.params.at(name);
    Tensor dst = bundle.params.at("target." + name);
    for (std::size_t j = 0; j < dst.values().size(); ++j) {
      dst[j] = static_cast<float>(tau * src[j] + (1.0 - tau) * dst[j]);
    }
    bundle.params.set("target." + name, std::move(dst));
  }
}

// ---------------------------------------------------------------------------

std::string TrainingReport::to_json() const {
  using nlohmann::ordered_json;
  ordered_json j;
  j["seed"] = seed;
  j["preset"] = preset;
  j["epochs_run"] = epochs_run;
  j["stopped_on_plateau"] = stopped_on_plateau;
  ordered_json rows = ordered_json::array();
  for (const auto& e : epochs) {
    ordered_json r;
    r["epoch"] = e.epoch;
    r["sessions"] = e.sessions;
    r["mean_rounds"] = e.mean_rounds;
    ordered_json ret;
    for (int a = 0; a < kNumAspects; ++a) ret[std::string(aspect_name(a))] = e.returns[static_cast<std::size_t>(a)];
    r["returns"] = ret;
    r["critic_loss"] = e.critic_loss;
    r["actor_grad_norm"] = e.actor_grad_norm;
    r["wm_loss"] = e.wm_loss;
    r["real_buffer"] = e.real_size;
    r["sim_buffer"] = e.sim_size;
    r["sim_stored"] = e.sim_stored;
    rows.push_back(std::move(r));
  }
  j["epochs"] = std::move(rows);
  return j.dump(2) + "\n";
}

std::string TrainingReport::to_csv() const {
  std::ostringstream out;
  const std::size_t n_critics = epochs.empty() ? 0 : epochs.front().critic_loss.size();
  out << "epoch,watchtime,click,like,follow,comment,hate,longview";
  for (std::size_t i = 0; i < n_critics; ++i) out << ",critic_loss_" << i;
  out << ",wm_loss\n";
  for (const auto& e : epochs) {
    out << e.epoch << "," << num(e.returns[kWatchAspect]);
    for (int a = 0; a < kWatchAspect; ++a) out << "," << num(e.returns[static_cast<std::size_t>(a)]);
    for (double l : e.critic_loss) out << "," << num(l);
    out << "," << num(e.wm_loss) << "\n";
  }
  return out.str();
}

TrainingResult train(const Environment& env, const AgentsConfig& agents, const WorldModelConfig& wm_config,
                     const TrainingConfig& config, std::uint64_t seed, int threads, const EpochCallback& on_epoch) {
  config.validate();
  agents.validate();
  wm_config.validate();
  const Rng root(seed);
  Rng init = root.split("init");
  Rng agent_init = init.split("agents");
  Rng wm_init = init.split("worldmodel");
  const std::int64_t d = env.config().dim;
  TrainingResult res{TrainingReport{}, AgentBundle(agents, env.state_dim(), d, agent_init),
                     WorldModel(wm_config, env.state_dim(), d, wm_init), OptState{}};
  res.report.seed = seed;
  AgentBundle& bundle = res.bundle;
  WorldModel& model = res.model;
  const int n = bundle.size();

  std::vector<ReplayBuffer> real, sim;
  for (int i = 0; i < n; ++i) {
    real.emplace_back(static_cast<std::size_t>(config.buffer_capacity));
    sim.emplace_back(static_cast<std::size_t>(config.buffer_capacity));
  }
  WmSequenceBuffer sequences(static_cast<std::size_t>(wm_config.capacity_sessions));
  std::vector<int> all_agents(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) all_agents[static_cast<std::size_t>(i)] = i;

  double best = -std::numeric_limits<double>::infinity();
  std::int64_t since_best = 0;
  for (std::int64_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const Rng erng = root.split(static_cast<std::uint64_t>(epoch));
    EpochMetrics m;
    m.epoch = epoch;
    m.sessions = config.sessions_per_epoch;
    m.critic_loss.assign(static_cast<std::size_t>(n), 0.0);

    // Rollouts read the bundle and model only.
    std::vector<SessionRollout> rollouts(static_cast<std::size_t>(config.sessions_per_epoch));
    const Rng session_root = erng.split("session");
    const WorldModel* tracker = model.epochs_trained > 0 ? &model : nullptr;
    parallel_for(rollouts.size(), threads, [&](std::size_t i) {
      Rng r = session_root.split(static_cast<std::uint64_t>(i));
      rollouts[i] = collect_rollout(env, bundle, config, tracker, r);
    });

    std::vector<NonImpressionSample> samples;
    for (auto& ro : rollouts) {
      for (int i = 0; i < n; ++i) {
        for (auto& t : ro.transitions[static_cast<std::size_t>(i)]) real[static_cast<std::size_t>(i)].push(std::move(t));
      }
      sequences.push(std::move(ro.sequence));
      for (auto& s : ro.nonimpressions) samples.push_back(std::move(s));
      for (int a = 0; a < kNumAspects; ++a) m.returns[static_cast<std::size_t>(a)] += ro.returns[static_cast<std::size_t>(a)];
      m.mean_rounds += static_cast<double>(ro.rounds);
    }
    for (auto& v : m.returns) v /= static_cast<double>(rollouts.size());
    m.mean_rounds /= static_cast<double>(rollouts.size());

    Rng sim_rng = erng.split("simulate");
    if (config.nonimpression == NonImpressionMode::constant) {
      m.sim_stored = simulate_and_store(nullptr, samples, bundle, config, env.config().k, sim, sim_rng);
    } else if (config.nonimpression == NonImpressionMode::simulated && tracker != nullptr) {
      m.sim_stored = simulate_and_store(&model, samples, bundle, config, env.config().k, sim, sim_rng);
    }

    const auto batch = static_cast<std::size_t>(config.batch_size);
    std::int64_t updates = 0;
    if (real.front().size() >= batch) {
      const Rng urng_root = erng.split("update");
      for (std::int64_t u = 0; u < config.updates_per_epoch; ++u) {
        Rng urng = urng_root.split(static_cast<std::uint64_t>(u));
        const std::size_t n_sim =
            sim.front().empty() ? 0 : static_cast<std::size_t>(std::llround(static_cast<double>(batch) * (1.0 - config.real_fraction)));
        const std::size_t n_real = batch - n_sim;
        std::vector<std::size_t> ri(n_real), si(n_sim);
        for (auto& x : ri) x = urng.below(real.front().size());
        for (auto& x : si) x = urng.below(sim.front().size());
        std::vector<std::vector<const Transition*>> batches(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
          auto& b = batches[static_cast<std::size_t>(i)];
          for (auto x : ri) b.push_back(&real[static_cast<std::size_t>(i)].at(x));
          for (auto x : si) b.push_back(&sim[static_cast<std::size_t>(i)].at(x));
        }
        // Buffers fill in lockstep, so every agent's batch shares its states.
        const auto boot = bootstrap_values(
            bundle, all_agents, gather(batches.front(), [](const Transition& t) -> const auto& { return t.next_state; }));
        for (int i = 0; i < n; ++i) {
          const auto& b = batches[static_cast<std::size_t>(i)];
          const auto y = targets_from(b, boot[static_cast<std::size_t>(i)], config.gamma);
          CriticStep cs = critic_gradients(bundle, i, b, y);
          const auto names = bundle.critic_param_names(i);
          zero_fill(cs.grads, bundle.params, names);
          adam_step(bundle.params, cs.grads, group(res.opt, "critic." + std::to_string(i), bundle.params, names),
                    config.critic_lr);
          m.critic_loss[static_cast<std::size_t>(i)] += cs.loss;
        }
        std::vector<const std::vector<float>*> states;
        for (const auto* t : batches.front()) states.push_back(&t->state);
        const ActorStep as = update_actors(bundle, res.opt, states, config.actor_lr, config.aux_lr, config.action_l2);
        double sq = 0.0;
        for (double g : as.actor_grad_norm) sq += g * g;
        m.actor_grad_norm += std::sqrt(sq);
        polyak_update(bundle, config.tau);
        ++updates;
      }
    }
    if (updates > 0) {
      for (auto& l : m.critic_loss) l /= static_cast<double>(updates);
      m.actor_grad_norm /= static_cast<double>(updates);
    }

    if (!sequences.empty() && wm_config.updates_per_epoch > 0) {
      const Rng wrng_root = erng.split("wm_update");
      for (std::int64_t u = 0; u < wm_config.updates_per_epoch; ++u) {
        Rng wrng = wrng_root.split(static_cast<std::uint64_t>(u));
        const auto wb = sequences.sample(static_cast<std::size_t>(wm_config.batch_sessions), wrng);
        m.wm_loss += wm_update(model, wb, wm_config.lr, wrng);
      }
      m.wm_loss /= static_cast<double>(wm_config.updates_per_epoch);
      ++model.epochs_trained;
    }
    m.real_size = real.front().size();
    m.sim_size = sim.front().size();

    res.report.epochs.push_back(m);
    res.report.epochs_run = epoch;
    if (on_epoch) on_epoch(m);

    const double watch = m.returns[kWatchAspect];
    if (watch > best) {
      best = watch;
      since_best = 0;
    } else if (config.plateau_patience > 0 && ++since_best >= config.plateau_patience) {
      res.report.stopped_on_plateau = true;
      break;
    }
  }
  return res;
}

}  // namespace mmrf
