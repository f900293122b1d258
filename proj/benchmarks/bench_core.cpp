// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <vector>

#include "mmrf/agents.hpp"
#include "mmrf/env.hpp"
#include "mmrf/graph.hpp"
#include "mmrf/rng.hpp"
#include "mmrf/training.hpp"

using namespace mmrf;

namespace {

Tensor64 random_tensor(std::int64_t rows, std::int64_t cols, Rng& rng) {
  Tensor64 t({rows, cols});
  for (auto& v : t.values()) v = rng.normal();
  return t;
}

void BM_MatmulForwardBackward(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  Rng rng(1);
  const Tensor64 x = random_tensor(128, n, rng), w = random_tensor(n, n, rng);
  for (auto _ : state) {
    Graph g;
    const Var xv = g.input(x), wv = g.input(w);
    const Var loss = sum(matmul_nt(xv, wv));
    g.backward(loss);
    benchmark::DoNotOptimize(g.grad(wv).values().data());
  }
  state.SetItemsProcessed(state.iterations() * 128 * n * n);
}
BENCHMARK(BM_MatmulForwardBackward)->Arg(32)->Arg(64)->Arg(128);

void BM_ActJoint(benchmark::State& state) {
  Rng rng(2);
  const AgentBundle bundle(AgentsConfig{}, state_feature_dim(16), 16, rng);
  std::vector<float> s(static_cast<std::size_t>(state_feature_dim(16)));
  for (auto& v : s) v = static_cast<float>(rng.normal());
  for (auto _ : state) {
    const JointAction a = act(bundle, s, CollabMode::attention);
    benchmark::DoNotOptimize(a.main.data());
  }
}
BENCHMARK(BM_ActJoint);

void BM_EnvStep(benchmark::State& state) {
  const Environment env(EnvConfig{}, 3);
  Rng rng(4);
  Session session = env.begin_session(rng);
  for (auto _ : state) {
    if (session.done) session = env.begin_session(rng);
    const CandidatePool& pool = env.candidate_pool(session, rng);
    std::vector<float> scores(pool.ids.size());
    for (auto& v : scores) v = static_cast<float>(rng.uniform());
    const StepResult r = env.step(session, scores, rng);
    benchmark::DoNotOptimize(r.done);
  }
}
BENCHMARK(BM_EnvStep);

void BM_CriticUpdate(benchmark::State& state) {
  const Environment env(EnvConfig{}, 5);
  Rng rng(6);
  AgentBundle bundle(AgentsConfig{}, env.state_dim(), env.config().dim, rng);
  std::vector<Transition> data(128);
  for (auto& t : data) {
    for (std::int64_t c = 0; c < env.state_dim(); ++c) {
      t.state.push_back(static_cast<float>(rng.normal()));
      t.next_state.push_back(static_cast<float>(rng.normal()));
    }
    for (std::int64_t c = 0; c < env.config().dim; ++c) t.action.push_back(static_cast<float>(rng.uniform(-1, 1)));
    t.reward = rng.normal();
  }
  std::vector<const Transition*> batch;
  for (const auto& t : data) batch.push_back(&t);
  OptState opt;
  for (auto _ : state) benchmark::DoNotOptimize(update_critic(bundle, opt, bundle.main_index(), batch, 0.95, 1e-3));
}
BENCHMARK(BM_CriticUpdate);

}  // namespace

BENCHMARK_MAIN();
