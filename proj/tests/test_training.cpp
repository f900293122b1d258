// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <set>

#include "mmrf/training.hpp"
#include "support.hpp"

using namespace mmrf;

namespace {

AgentsConfig tiny_agents(int n = 3) {
  AgentsConfig c;
  c.n_agents = n;
  c.encoder_hidden = 8;
  c.embed_dim = 4;
  c.attention_dim = 4;
  c.heads = 2;
  c.actor_hidden = 8;
  c.critic_embed = 8;
  c.critic_hidden = 8;
  return c;
}

EnvConfig tiny_env() {
  EnvConfig c;
  c.n_items = 200;
  c.pool_size = 40;
  c.k = 3;
  c.horizon = 4;
  c.dim = 4;
  return c;
}

/// Makes agent i's online and target critics output constants.
void constant_critic(AgentBundle& b, int i, double online, double target) {
  const std::string head = AgentBundle::agent_prefix(i) + ".critic.head.layer1.";
  for (const std::string prefix : {"", "target."}) {
    Tensor& w = b.params.at(prefix + head + "weight");
    w.fill(0.0f);
    Tensor& bias = b.params.at(prefix + head + "bias");
    bias.fill(static_cast<float>(prefix.empty() ? online : target));
  }
}

Transition make_transition(const AgentBundle& b, double reward, bool done, Rng& rng) {
  Transition t;
  for (std::int64_t c = 0; c < b.state_dim(); ++c) {
    t.state.push_back(static_cast<float>(rng.normal()));
    t.next_state.push_back(static_cast<float>(rng.normal()));
  }
  for (std::int64_t c = 0; c < b.action_dim(); ++c) t.action.push_back(static_cast<float>(rng.uniform(-1, 1)));
  t.reward = reward;
  t.done = done;
  return t;
}

double q_value(const AgentBundle& b, int i, const std::vector<float>& s, const std::vector<float>& a) {
  Graph g;
  const nn::Binder p{g, b.params, false, ""};
  return critic_value(p, b, i, g.constant(Tensor64::row(std::vector<double>(s.begin(), s.end()))),
                      g.constant(Tensor64::row(std::vector<double>(a.begin(), a.end()))))
      .value()[0];
}

}  // namespace

TEST_CASE("replay buffer keeps the newest entries in insertion order") {
  ReplayBuffer buf(3);
  CHECK_THROWS_AS(ReplayBuffer(0), ConfigError);
  Rng rng(1);
  CHECK_THROWS_AS(buf.sample(1, rng), ContractError);
  for (int i = 0; i < 5; ++i) {
    Transition t;
    t.reward = i;
    buf.push(t);
  }
  CHECK(buf.size() == 3);
  CHECK(buf.inserted() == 5);
  CHECK(buf.at(0).reward == 2.0);
  CHECK(buf.at(1).reward == 3.0);
  CHECK(buf.at(2).reward == 4.0);
  CHECK_THROWS_AS(buf.at(3), ContractError);
  std::set<double> seen;
  for (const auto* t : buf.sample(200, rng)) seen.insert(t->reward);
  CHECK(seen == std::set<double>{2.0, 3.0, 4.0});
}

TEST_CASE("temporal difference arithmetic") {
  Rng init(2);
  AgentBundle b(tiny_agents(), 5, 3, init);
  constant_critic(b, 1, 2.5, 2.0);
  Rng rng(3);
  const Transition t = make_transition(b, 1.0, false, rng);
  CHECK(td_error(b, 1, t, 0.9) == doctest::Approx(0.3).epsilon(1e-12));
  const Transition terminal = make_transition(b, 1.0, true, rng);
  CHECK(td_error(b, 1, terminal, 0.9) == 1.0 - 2.5);
}

TEST_CASE("terminal transitions bootstrap nothing") {
  Rng init(4);
  const AgentBundle b(tiny_agents(), 5, 3, init);
  Rng rng(5);
  for (int k = 0; k < 5; ++k) {
    const Transition t = make_transition(b, rng.normal(), true, rng);
    CHECK(td_error(b, 0, t, 0.95) == t.reward - q_value(b, 0, t.state, t.action));
  }
}

TEST_CASE("batched errors equal the per-sample loop") {
  Rng init(6);
  const AgentBundle b(tiny_agents(), 5, 3, init);
  Rng rng(7);
  std::vector<Transition> ts;
  for (int k = 0; k < 9; ++k) ts.push_back(make_transition(b, rng.normal(), k % 3 == 0, rng));
  std::vector<const Transition*> batch;
  for (const auto& t : ts) batch.push_back(&t);
  const auto delta = td_errors(b, 2, batch, 0.95);
  for (std::size_t k = 0; k < ts.size(); ++k) CHECK(delta[k] == doctest::Approx(td_error(b, 2, ts[k], 0.95)).epsilon(1e-12));
  CHECK_THROWS_AS(td_errors(b, 2, {}, 0.95), ContractError);
}

TEST_CASE("zero errors leave the critic unchanged") {
  Rng init(8);
  AgentBundle b(tiny_agents(), 5, 3, init);
  Rng rng(9);
  std::vector<Transition> ts;
  for (int k = 0; k < 4; ++k) ts.push_back(make_transition(b, 0.0, false, rng));
  std::vector<const Transition*> batch;
  std::vector<double> sv, av;
  for (const auto& t : ts) {
    batch.push_back(&t);
    sv.insert(sv.end(), t.state.begin(), t.state.end());
    av.insert(av.end(), t.action.begin(), t.action.end());
  }
  // Targets from the same batched forward, so every error is exactly zero.
  Graph g;
  const nn::Binder p{g, b.params, false, ""};
  const Var q = critic_value(p, b, 0, g.constant(Tensor64({4, 5}, sv)), g.constant(Tensor64({4, 3}, av)));
  const std::vector<double> targets(q.value().values().begin(), q.value().values().end());
  const CriticStep step = critic_gradients(b, 0, batch, targets);
  CHECK(step.loss == 0.0);
  for (const auto& [name, g] : step.grads) {
    for (double v : g.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("critic loss gradient") {
  Rng init(10);
  AgentBundle b(tiny_agents(), 5, 3, init);
  Rng rng(11);
  std::vector<Transition> ts;
  for (int k = 0; k < 6; ++k) ts.push_back(make_transition(b, rng.normal(), false, rng));
  std::vector<const Transition*> batch;
  std::vector<double> targets;
  for (const auto& t : ts) {
    batch.push_back(&t);
    targets.push_back(rng.normal());
  }
  const CriticStep step = critic_gradients(b, 1, batch, targets);
  const double err = test::check_params(
      b.params,
      [&](const nn::Binder& p) {
        Tensor64 s({6, 5}), a({6, 3}), y({6, 1});
        for (std::size_t r = 0; r < 6; ++r) {
          for (std::int64_t c = 0; c < 5; ++c) s.at(static_cast<std::int64_t>(r), c) = ts[r].state[static_cast<std::size_t>(c)];
          for (std::int64_t c = 0; c < 3; ++c) a.at(static_cast<std::int64_t>(r), c) = ts[r].action[static_cast<std::size_t>(c)];
          y[static_cast<std::int64_t>(r)] = targets[r];
        }
        Var q = critic_value(p, b, 1, p.graph.constant(s), p.graph.constant(a));
        return scale(sum(square(sub(q, p.graph.constant(y)))), 0.5 / 6.0);
      },
      [](const std::string& n) { return starts_with(n, "agent.1.critic."); });
  CHECK(err < test::kGradTol);
  CHECK(step.grads.count("agent.1.critic.head.layer1.bias") == 1);
}

TEST_CASE("two-state chain critic converges to the discounted return") {
  // s0 -> s1 pays 1, s1 -> s0 pays 0, forever.
  const double gamma = 0.9;
  const double v0 = 1.0 / (1.0 - gamma * gamma);
  const double v1 = gamma * v0;
  Rng init(12);
  AgentsConfig ac = tiny_agents(2);
  AgentBundle b(ac, 2, 2, init);
  const std::vector<float> s0{1.0f, 0.0f}, s1{0.0f, 1.0f};
  const JointAction a0 = act(b, s0, ac.collab), a1 = act(b, s1, ac.collab);
  const int agent = b.main_index();
  const Transition t0{s0, a0.main, 1.0, s1, false, true, agent};
  const Transition t1{s1, a1.main, 0.0, s0, false, true, agent};
  const std::vector<const Transition*> batch{&t0, &t1};
  OptState opt;
  const auto start = std::chrono::steady_clock::now();
  int used = 0;
  double e0 = 1e9, e1 = 1e9;
  for (int u = 1; u <= 10000; ++u) {
    update_critic(b, opt, agent, batch, gamma, 3e-3);
    polyak_update(b, 0.02);
    used = u;
    if (u % 100 == 0) {
      e0 = std::fabs(q_value(b, agent, s0, a0.main) - v0);
      e1 = std::fabs(q_value(b, agent, s1, a1.main) - v1);
      if (e0 < 0.05 && e1 < 0.05) break;
    }
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  MESSAGE("converged after " << used << " updates in " << seconds << " s");
  CHECK(e0 < 0.05);
  CHECK(e1 < 0.05);
  CHECK(used <= 10000);
  CHECK(seconds < 60.0);
}

TEST_CASE("polyak averaging") {
  Rng init(13);
  AgentBundle b(tiny_agents(), 5, 3, init);
  const std::string name = "agent.0.actor.layer0.weight";
  const float online = b.params.at(name)[0];
  b.params.at("target." + name)[0] = online + 1.0f;
  polyak_update(b, 0.5);
  CHECK(b.params.at("target." + name)[0] == doctest::Approx(online + 0.5f));
  polyak_update(b, 1.0);
  for (const auto& [n, t] : b.params) {
    if (!starts_with(n, "target.")) CHECK(b.params.at("target." + n) == t);
  }
  CHECK_THROWS_AS(polyak_update(b, 0.0), ContractError);
}

TEST_CASE("actor step branch structure") {
  Rng init(14);
  AgentBundle b(tiny_agents(4), 5, 3, init);
  Rng rng(15);
  std::vector<std::vector<float>> rows(8);
  for (auto& r : rows) {
    for (int c = 0; c < 5; ++c) r.push_back(static_cast<float>(rng.normal()));
  }
  std::vector<const std::vector<float>*> states;
  for (const auto& r : rows) states.push_back(&r);
  auto norm_of = [](const GradStore& g, const std::string& prefix) {
    double s = 0.0;
    for (const auto& [n, t] : g) {
      if (!starts_with(n, prefix)) continue;
      for (double v : t.values()) s += v * v;
    }
    return std::sqrt(s);
  };

  SUBCASE("main goal only") {
    const ActorStep step = actor_gradients(b, states, 1.0, 0.0);
    for (int k = 0; k < b.main_index(); ++k) {
      const std::string a = AgentBundle::agent_prefix(k);
      CHECK(norm_of(step.grads, a + ".critic.") == 0.0);
      CHECK(norm_of(step.grads, a + ".actor.") > 0.0);
    }
    CHECK(step.actor_grad_norm[static_cast<std::size_t>(b.main_index())] > 0.0);
  }
  SUBCASE("auxiliary goals only") {
    const ActorStep step = actor_gradients(b, states, 0.0, 1.0);
    CHECK(norm_of(step.grads, AgentBundle::agent_prefix(b.main_index()) + ".actor.") == 0.0);
    CHECK(norm_of(step.grads, "agent.0.actor.") > 0.0);
  }
  SUBCASE("critics are never stepped by the actor update") {
    OptState opt;
    const ParamStore before = b.params;
    update_actors(b, opt, states, 1e-2, 1e-2);
    for (const auto& [n, t] : b.params) {
      if (n.find(".critic.") != std::string::npos || starts_with(n, "target.")) CHECK(before.at(n) == t);
    }
    bool moved = false;
    for (const auto& n : b.actor_param_names()) moved = moved || !(before.at(n) == b.params.at(n));
    CHECK(moved);
  }
  SUBCASE("gradient matches the objective") {
    const double alpha = 0.7, beta = 0.3;
    const ActorStep step = actor_gradients(b, states, alpha, beta);
    Tensor64 s(Shape{8, 5});
    for (std::size_t r = 0; r < 8; ++r) {
      for (std::int64_t c = 0; c < 5; ++c) s.at(static_cast<std::int64_t>(r), c) = rows[r][static_cast<std::size_t>(c)];
    }
    const double err = test::check_params(
        b.params,
        [&](const nn::Binder& p) {
          Var st = p.graph.constant(s);
          const JointOutput out = act_joint(p, b, st, b.config().collab);
          Var obj = scale(sum(critic_value(p, b, b.main_index(), st, out.main_action)), alpha / 8.0);
          for (int k = 0; k < b.main_index(); ++k) {
            obj = add(obj, scale(sum(critic_value(p, b, k, st, out.aux_actions[static_cast<std::size_t>(k)])), beta / 8.0));
          }
          return scale(obj, -1.0);
        },
        [](const std::string& n) { return !starts_with(n, "target.") && n.find(".critic.") == std::string::npos; });
    CHECK(err < test::kGradTol);
    CHECK(!step.grads.empty());
  }
  SUBCASE("action penalty adds the gradient of the squared actions") {
    const double alpha = 0.7, beta = 0.3, l2 = 0.5;
    const ActorStep plain = actor_gradients(b, states, alpha, beta);
    const ActorStep penalised = actor_gradients(b, states, alpha, beta, l2);
    Graph g;
    const nn::Binder p{g, b.params, true, ""};
    Tensor64 s(Shape{8, 5});
    for (std::size_t r = 0; r < 8; ++r) {
      for (std::int64_t c = 0; c < 5; ++c) s.at(static_cast<std::int64_t>(r), c) = rows[r][static_cast<std::size_t>(c)];
    }
    const JointOutput out = act_joint(p, b, g.constant(s), b.config().collab);
    Var pen = scale(sum(square(out.main_action)), alpha * l2 / 8.0);
    for (const auto& a : out.aux_actions) pen = add(pen, scale(sum(square(a)), beta * l2 / 8.0));
    g.backward(pen);
    const GradStore expect = g.param_grads();
    double worst = 0.0;
    for (const auto& [n, t] : penalised.grads) {
      const Tensor64& base = plain.grads.at(n);
      for (std::size_t j = 0; j < t.values().size(); ++j) {
        const double e = expect.count(n) ? expect.at(n).values()[j] : 0.0;
        worst = std::max(worst, std::fabs(t.values()[j] - base.values()[j] - e));
      }
    }
    CHECK(worst < 1e-12);
    CHECK(norm_of(penalised.grads, "agent.") != norm_of(plain.grads, "agent."));
    TrainingConfig bad;
    bad.action_l2 = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}

TEST_CASE("non-impression slate sampling") {
  const Environment env(tiny_env(), 1);
  Rng rng(16);
  Session s = env.begin_session(rng);
  const CandidatePool& pool = env.candidate_pool(s, rng);
  Rng r(17);
  const auto slates = sample_nonimpression(pool, 3, 1.0, 10000, 0.25, r);
  const double kept = static_cast<double>(slates.size()) / 10000.0;
  CHECK(kept >= 0.23);
  CHECK(kept <= 0.27);
  const std::set<std::int64_t> members(pool.ids.begin(), pool.ids.end());
  for (const auto& sl : slates) {
    REQUIRE(sl.items.size() == 3);
    CHECK(std::set<std::int64_t>(sl.items.begin(), sl.items.end()).size() == 3);
    for (auto id : sl.items) CHECK(members.count(id) == 1);
    for (float a : sl.action) CHECK(std::fabs(a) <= 1.0f);
  }
  Rng none(18), all(18);
  CHECK(sample_nonimpression(pool, 3, 1.0, 50, 0.0, none).empty());
  CHECK(sample_nonimpression(pool, 3, 1.0, 50, 1.0, all).size() == 50);
  CHECK(none.counter() == all.counter());
  Rng bad(19);
  CHECK_THROWS_AS(sample_nonimpression(pool, 3, 1.0, 5, 1.5, bad), ContractError);
}

TEST_CASE("rollouts store one transition per agent per round") {
  const Environment env(tiny_env(), 1);
  Rng init(20);
  const AgentBundle b(tiny_agents(), env.state_dim(), env.config().dim, init);
  TrainingConfig cfg;
  Rng wm_init(21);
  const WorldModel model(WorldModelConfig{}, env.state_dim(), env.config().dim, wm_init);
  Rng rng(22);
  const SessionRollout ro = collect_rollout(env, b, cfg, &model, rng);
  REQUIRE(ro.transitions.size() == 3);
  for (int i = 0; i < 3; ++i) {
    const auto& ts = ro.transitions[static_cast<std::size_t>(i)];
    CHECK(static_cast<std::int64_t>(ts.size()) == ro.rounds);
    for (const auto& t : ts) {
      CHECK(t.agent == i);
      CHECK(t.impression);
      CHECK(static_cast<std::int64_t>(t.state.size()) == env.state_dim());
    }
    CHECK(ts.back().done);
  }
  CHECK(static_cast<std::int64_t>(ro.sequence.size()) == ro.rounds);
  // Agent 0 optimises clicks with unit scale.
  double clicks = 0.0;
  for (const auto& t : ro.transitions[0]) clicks += t.reward;
  CHECK(clicks == doctest::Approx(ro.returns[0]));
  double watch = 0.0;
  for (const auto& t : ro.transitions[2]) watch += t.reward;
  CHECK(watch == doctest::Approx(cfg.reward_scale[kWatchAspect] * ro.returns[kWatchAspect]));

  Rng again(22);
  const SessionRollout ro2 = collect_rollout(env, b, cfg, &model, again);
  CHECK(ro2.transitions == ro.transitions);
}

TEST_CASE("labelling non-impression slates") {
  const Environment env(tiny_env(), 1);
  Rng init(23);
  const AgentBundle b(tiny_agents(), env.state_dim(), env.config().dim, init);
  Rng wm_init(24);
  const WorldModel model(WorldModelConfig{}, env.state_dim(), env.config().dim, wm_init);
  TrainingConfig cfg;
  cfg.nonimpression_rate = 1.0;
  Rng rng(25);
  const SessionRollout ro = collect_rollout(env, b, cfg, &model, rng);
  REQUIRE(!ro.nonimpressions.empty());
  auto buffers = [] {
    std::vector<ReplayBuffer> v;
    for (int i = 0; i < 3; ++i) v.emplace_back(1000);
    return v;
  };

  auto sim = buffers();
  Rng r1(26);
  CHECK(simulate_and_store(&model, ro.nonimpressions, b, cfg, env.config().k, sim, r1) == ro.nonimpressions.size());
  for (const auto& buf : sim) {
    CHECK(buf.size() == ro.nonimpressions.size());
    for (std::size_t j = 0; j < buf.size(); ++j) {
      CHECK(!buf.at(j).impression);
      CHECK(std::isfinite(buf.at(j).reward));
    }
  }

  TrainingConfig constant = cfg;
  constant.nonimpression = NonImpressionMode::constant;
  constant.constant_reward = -0.25;
  auto csim = buffers();
  Rng r2(27);
  simulate_and_store(nullptr, ro.nonimpressions, b, constant, env.config().k, csim, r2);
  for (const auto& buf : csim) CHECK(buf.at(0).reward == -0.25);

  TrainingConfig disabled = cfg;
  disabled.nonimpression = NonImpressionMode::disabled;
  auto dsim = buffers();
  Rng r3(28);
  CHECK(simulate_and_store(&model, ro.nonimpressions, b, disabled, env.config().k, dsim, r3) == 0);
  CHECK(dsim[0].empty());

  auto wrong = buffers();
  wrong.pop_back();
  Rng r4(29);
  CHECK_THROWS_AS(simulate_and_store(&model, ro.nonimpressions, b, cfg, env.config().k, wrong, r4), ContractError);
}

TEST_CASE("training is deterministic and independent of the thread count") {
  const Environment env(tiny_env(), 1);
  TrainingConfig cfg;
  cfg.epochs = 3;
  cfg.sessions_per_epoch = 6;
  cfg.updates_per_epoch = 3;
  cfg.batch_size = 8;
  cfg.plateau_patience = 0;
  WorldModelConfig wm;
  wm.updates_per_epoch = 2;
  wm.batch_sessions = 4;
  const auto one = train(env, tiny_agents(), wm, cfg, 5, 1);
  const auto again = train(env, tiny_agents(), wm, cfg, 5, 1);
  const auto three = train(env, tiny_agents(), wm, cfg, 5, 3);
  CHECK(one.report.to_json() == again.report.to_json());
  CHECK(one.report.to_json() == three.report.to_json());
  CHECK(one.bundle.params == three.bundle.params);
  CHECK(one.model.params == three.model.params);
  CHECK(one.report.epochs_run == 3);
  CHECK(one.report.epochs.back().sim_stored > 0);

  const auto other = train(env, tiny_agents(), wm, cfg, 6, 1);
  CHECK(other.report.to_json() != one.report.to_json());
}

TEST_CASE("zero epochs reports initialisation only") {
  const Environment env(tiny_env(), 1);
  TrainingConfig cfg;
  cfg.epochs = 0;
  const auto res = train(env, tiny_agents(), WorldModelConfig{}, cfg, 1, 1);
  CHECK(res.report.epochs_run == 0);
  CHECK(res.report.epochs.empty());
  CHECK(res.report.to_csv().rfind("epoch,watchtime,click,like,follow,comment,hate,longview", 0) == 0);
}

TEST_CASE("ablation modes train") {
  const Environment env(tiny_env(), 1);
  TrainingConfig cfg;
  cfg.epochs = 2;
  cfg.sessions_per_epoch = 4;
  cfg.updates_per_epoch = 2;
  cfg.batch_size = 8;
  for (auto mode : {NonImpressionMode::disabled, NonImpressionMode::constant}) {
    cfg.nonimpression = mode;
    const auto res = train(env, tiny_agents(), WorldModelConfig{}, cfg, 2, 1);
    CHECK(res.report.epochs_run == 2);
    if (mode == NonImpressionMode::disabled) CHECK(res.report.epochs.back().sim_size == 0);
    if (mode == NonImpressionMode::constant) CHECK(res.report.epochs.back().sim_size > 0);
  }
  AgentsConfig co = tiny_agents();
  co.collab = CollabMode::concat;
  cfg.nonimpression = NonImpressionMode::simulated;
  CHECK(train(env, co, WorldModelConfig{}, cfg, 2, 1).report.epochs_run == 2);
}

TEST_CASE("training config validation names the key") {
  TrainingConfig c;
  c.gamma = 1.5;
  try {
    c.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("training.gamma") != std::string::npos);
  }
  CHECK(parse_nonimpression_mode("constant") == NonImpressionMode::constant);
  CHECK_THROWS_AS(parse_nonimpression_mode("sometimes"), ConfigError);
}
