// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>

#include "mmrf/checkpoint.hpp"
#include "mmrf/graph.hpp"
#include "mmrf/nn.hpp"
#include "mmrf/optim.hpp"
#include "mmrf/ranking.hpp"
#include "support.hpp"

using namespace mmrf;
using test::check_inputs;
using test::kGradTol;
using test::random_tensor;

TEST_CASE("tensor shape checks") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<float>(5)), DimensionError);
  CHECK_THROWS_AS(Tensor({-1}), DimensionError);
  const Tensor t({2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.at(1, 2) == 6.0f);
  CHECK(t.row_span(1)[0] == 4.0f);
}

TEST_CASE("rng streams are reproducible and independent") {
  Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  const Rng root(7);
  Rng c1 = root.split("x"), c2 = root.split("x"), c3 = root.split("y");
  CHECK(c1.next_u64() == c2.next_u64());
  CHECK(c1.next_u64() != c3.next_u64());

  Rng r(1);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  CHECK(std::fabs(s / n) < 0.01);
  CHECK(std::fabs(s2 / n - 1.0) < 0.02);
  for (int i = 0; i < 1000; ++i) CHECK(r.below(5) < 5);
}

TEST_CASE("matmul matches a brute-force triple loop") {
  Rng rng(3);
  for (auto [b, in, out] : {std::tuple{1, 1, 1}, {3, 5, 4}, {7, 13, 9}, {2, 64, 33}}) {
    const Tensor64 x = random_tensor({b, in}, rng), w = random_tensor({out, in}, rng);
    Graph g;
    const Tensor64& y = matmul_nt(g.constant(x), g.constant(w)).value();
    for (int r = 0; r < b; ++r) {
      for (int o = 0; o < out; ++o) {
        double acc = 0.0;
        for (int i = 0; i < in; ++i) acc += x.at(r, i) * w.at(o, i);
        CHECK(y.at(r, o) == doctest::Approx(acc).epsilon(1e-12));
      }
    }
  }
  Graph g;
  CHECK_THROWS_AS(matmul_nt(g.constant(Tensor64({2, 3})), g.constant(Tensor64({4, 2}))), DimensionError);
}

TEST_CASE("elementwise and structural ops have correct gradients") {
  Rng rng(11);
  const Tensor64 a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
  const Tensor64 row = random_tensor({4}, rng), col = random_tensor({3, 1}, rng);
  auto weights = random_tensor({3, 4}, rng);
  const Tensor64 wide = random_tensor({3, 6}, rng);
  auto weighted = [weights](Graph& g, Var v) { return sum(mul(v, g.constant(weights))); };

  CHECK(check_inputs([&](Graph& g, const std::vector<Var>& v) { return weighted(g, add(v[0], v[1])); }, {a, b}) < kGradTol);
  CHECK(check_inputs([&](Graph& g, const std::vector<Var>& v) { return weighted(g, sub(v[0], v[1])); }, {a, b}) < kGradTol);
  CHECK(check_inputs([&](Graph& g, const std::vector<Var>& v) { return weighted(g, mul(v[0], v[1])); }, {a, b}) < kGradTol);
  CHECK(check_inputs([&](Graph& g, const std::vector<Var>& v) { return weighted(g, add_row(v[0], v[1])); }, {a, row}) < kGradTol);
  CHECK(check_inputs([&](Graph& g, const std::vector<Var>& v) { return weighted(g, mul_col(v[0], v[1])); }, {a, col}) < kGradTol);
  CHECK(check_inputs([&](Graph& g, const std::vector<Var>& v) { return weighted(g, scale(v[0], -2.5)); }, {a}) < kGradTol);
  CHECK(check_inputs([&](Graph& g, const std::vector<Var>& v) { return weighted(g, add_scalar(v[0], 0.3)); }, {a}) < kGradTol);
  CHECK(check_inputs([&](Graph& g, const std::vector<Var>& v) { return weighted(g, square(v[0])); }, {a}) < kGradTol);
  CHECK(check_inputs([&](Graph& g, const std::vector<Var>& v) { return mean(v[0]); }, {a}) < kGradTol);
  CHECK(check_inputs(
            [&](Graph& g, const std::vector<Var>& v) {
              return sum(mul(concat_cols({v[0], slice_cols(v[1], 1, 2)}), g.constant(wide)));
            },
            {a, b}) < kGradTol);
  CHECK(check_inputs([&](Graph& g, const std::vector<Var>& v) { return sum(mul(rowdot(v[0], v[1]), g.constant(col))); },
                     {a, b}) < kGradTol);
}

TEST_CASE("activation gradients") {
  Rng rng(12);
  const Tensor64 a = random_tensor({4, 5}, rng, 2.0);
  const Tensor64 w = random_tensor({4, 5}, rng);
  for (auto kind : {nn::Activation::identity, nn::Activation::relu, nn::Activation::sigmoid, nn::Activation::tanh,
                    nn::Activation::softmax}) {
    CAPTURE(static_cast<int>(kind));
    CHECK(check_inputs([&](Graph& g, const std::vector<Var>& v) { return sum(mul(nn::activate(v[0], kind), g.constant(w))); },
                       {a}) < kGradTol);
  }
  Graph g;
  const Tensor64& s = softmax(g.constant(a)).value();
  for (int r = 0; r < 4; ++r) {
    double t = 0.0;
    for (int c = 0; c < 5; ++c) t += s.at(r, c);
    CHECK(t == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("linear layer gradient and parameter gradients") {
  Rng rng(13);
  const Tensor64 x = random_tensor({5, 6}, rng), w = random_tensor({3, 6}, rng), b = random_tensor({3}, rng);
  const Tensor64 m = random_tensor({5, 3}, rng);
  CHECK(check_inputs([&](Graph& g, const std::vector<Var>& v) { return sum(mul(linear(v[0], v[1], v[2]), g.constant(m))); },
                     {x, w, b}) < kGradTol);

  ParamStore store;
  Rng init(1);
  nn::init_mlp(store, "net", {6, 8, 3}, init);
  const double err = test::check_params(
      store,
      [&](const nn::Binder& p) {
        Graph& g = p.graph;
        return sum(mul(nn::mlp(p, "net", 2, g.constant(x), nn::Activation::tanh), g.constant(m)));
      },
      [](const std::string&) { return true; });
  CHECK(err < kGradTol);
}

namespace {

// Independent single-head evaluation of the attention context for one row.
std::vector<double> attention_oracle(const std::vector<double>& q_in, const std::vector<std::vector<double>>& keys,
                                     const Tensor64& wq, const Tensor64& wk, const Tensor64& wv, int heads) {
  const auto proj = wq.rows();
  const auto in = wq.cols();
  auto project = [&](const Tensor64& w, const std::vector<double>& x) {
    std::vector<double> y(static_cast<std::size_t>(proj), 0.0);
    for (std::int64_t o = 0; o < proj; ++o) {
      for (std::int64_t i = 0; i < in; ++i) y[static_cast<std::size_t>(o)] += w.at(o, i) * x[static_cast<std::size_t>(i)];
    }
    return y;
  };
  const auto q = project(wq, q_in);
  const std::int64_t hd = proj / heads;
  std::vector<double> ctx(static_cast<std::size_t>(proj), 0.0);
  for (int h = 0; h < heads; ++h) {
    std::vector<double> logits;
    for (const auto& k_in : keys) {
      const auto k = project(wk, k_in);
      double s = 0.0;
      for (std::int64_t c = h * hd; c < (h + 1) * hd; ++c) s += q[static_cast<std::size_t>(c)] * k[static_cast<std::size_t>(c)];
      logits.push_back(s);
    }
    double mx = logits[0];
    for (double l : logits) mx = std::max(mx, l);
    double z = 0.0;
    for (double& l : logits) z += (l = std::exp(l - mx));
    for (std::size_t j = 0; j < keys.size(); ++j) {
      const auto v = project(wv, keys[j]);
      for (std::int64_t c = h * hd; c < (h + 1) * hd; ++c) {
        ctx[static_cast<std::size_t>(c)] += logits[j] / z * std::max(0.0, v[static_cast<std::size_t>(c)]);
      }
    }
  }
  return ctx;
}

}  // namespace

TEST_CASE("multi-head attention matches the scalar evaluation") {
  Rng rng(21);
  const int heads = 2;
  const Tensor64 wq = random_tensor({4, 3}, rng), wk = random_tensor({4, 3}, rng), wv = random_tensor({4, 3}, rng);
  const Tensor64 q = random_tensor({2, 3}, rng);
  std::vector<Tensor64> keys{random_tensor({2, 3}, rng), random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)};
  Graph g;
  std::vector<Var> kv;
  for (const auto& k : keys) kv.push_back(g.constant(k));
  const auto res = nn::multihead_attention(g.constant(q), kv, kv, heads,
                                           {g.constant(wq), g.constant(wk), g.constant(wv)});
  REQUIRE(res.weights.size() == 2);
  for (int r = 0; r < 2; ++r) {
    std::vector<std::vector<double>> kr;
    for (const auto& k : keys) kr.emplace_back(k.row_span(r).begin(), k.row_span(r).end());
    const auto expect =
        attention_oracle(std::vector<double>(q.row_span(r).begin(), q.row_span(r).end()), kr, wq, wk, wv, heads);
    for (int c = 0; c < 4; ++c) CHECK(res.context.value().at(r, c) == doctest::Approx(expect[static_cast<std::size_t>(c)]).epsilon(1e-12));
  }
}

TEST_CASE("attention gradient") {
  Rng rng(22);
  const Tensor64 wq = random_tensor({4, 3}, rng), wk = random_tensor({4, 3}, rng), wv = random_tensor({4, 3}, rng);
  const Tensor64 q = random_tensor({2, 3}, rng), k1 = random_tensor({2, 3}, rng), k2 = random_tensor({2, 3}, rng);
  const Tensor64 m = random_tensor({2, 4}, rng);
  for (bool scaled : {false, true}) {
    CHECK(check_inputs(
              [&](Graph& g, const std::vector<Var>& v) {
                const auto res = nn::multihead_attention(v[0], {v[1], v[2]}, {v[1], v[2]}, 2, {v[3], v[4], v[5]}, scaled);
                return sum(mul(res.context, g.constant(m)));
              },
              {q, k1, k2, wq, wk, wv}) < kGradTol);
  }
}

TEST_CASE("attention rejects bad head counts") {
  Graph g;
  Var x = g.constant(Tensor64({1, 4}));
  Var w = g.constant(Tensor64({4, 4}));
  CHECK_THROWS_AS(nn::multihead_attention(x, {x}, {x}, 3, {w, w, w}), DimensionError);
  CHECK_THROWS_AS(nn::multihead_attention(x, {}, {}, 1, {w, w, w}), ContractError);
}

namespace {

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("gru step matches a scalar evaluation") {
  ParamStore store;
  Rng init(31);
  const int in = 3, hid = 4;
  nn::init_gru(store, "cell", in, hid, init);
  Rng rng(32);
  const Tensor64 x = random_tensor({2, in}, rng), h = random_tensor({2, hid}, rng);
  Graph g;
  const nn::Binder p{g, store, false, ""};
  const Tensor64& out = nn::gru_step(p, "cell", g.constant(h), g.constant(x)).value();
  const Tensor& wih = store.at("cell.w_ih");
  const Tensor& whh = store.at("cell.w_hh");
  const Tensor& bih = store.at("cell.b_ih");
  const Tensor& bhh = store.at("cell.b_hh");
  for (int r = 0; r < 2; ++r) {
    for (int u = 0; u < hid; ++u) {
      auto gate = [&](int block, bool hidden_side) {
        double s = hidden_side ? bhh[block * hid + u] : bih[block * hid + u];
        if (hidden_side) {
          for (int c = 0; c < hid; ++c) s += whh.at(block * hid + u, c) * h.at(r, c);
        } else {
          for (int c = 0; c < in; ++c) s += wih.at(block * hid + u, c) * x.at(r, c);
        }
        return s;
      };
      const double rg = sigm(gate(0, false) + gate(0, true));
      const double zg = sigm(gate(1, false) + gate(1, true));
      const double ng = std::tanh(gate(2, false) + rg * gate(2, true));
      const double expect = (1.0 - zg) * h.at(r, u) + zg * ng;
      CHECK(out.at(r, u) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("gru with zero parameters keeps a zero hidden state") {
  ParamStore store;
  store.set("cell.w_ih", Tensor({6, 3}));
  store.set("cell.w_hh", Tensor({6, 2}));
  store.set("cell.b_ih", Tensor({6}));
  store.set("cell.b_hh", Tensor({6}));
  Graph g;
  const nn::Binder p{g, store, false, ""};
  const Tensor64& out = nn::gru_step(p, "cell", g.constant(Tensor64({1, 2})), g.constant(Tensor64({1, 3}))).value();
  for (double v : out.values()) CHECK(v == 0.0);
}

TEST_CASE("gru gradient through two steps") {
  ParamStore store;
  Rng init(33);
  nn::init_gru(store, "cell", 3, 4, init);
  Rng rng(34);
  const Tensor64 x1 = random_tensor({2, 3}, rng), x2 = random_tensor({2, 3}, rng), h = random_tensor({2, 4}, rng);
  const Tensor64 m = random_tensor({2, 4}, rng);
  const double input_err = check_inputs(
      [&](Graph& g, const std::vector<Var>& v) {
        const nn::Binder p{g, store, false, ""};
        Var h1 = nn::gru_step(p, "cell", v[0], v[1]);
        return sum(mul(nn::gru_step(p, "cell", h1, v[2]), g.constant(m)));
      },
      {h, x1, x2});
  CHECK(input_err < kGradTol);
  const double param_err = test::check_params(
      store,
      [&](const nn::Binder& p) {
        Graph& g = p.graph;
        Var h1 = nn::gru_step(p, "cell", g.constant(h), g.constant(x1));
        return sum(mul(nn::gru_step(p, "cell", h1, g.constant(x2)), g.constant(m)));
      },
      [](const std::string&) { return true; });
  CHECK(param_err < kGradTol);
}

TEST_CASE("dropout") {
  Rng rng(41);
  const Tensor64 x = random_tensor({3, 5}, rng);
  const Tensor64 m = random_tensor({3, 5}, rng);
  SUBCASE("inactive path is the identity with identity gradient") {
    Graph g;
    Rng d(1);
    Var in = g.input(x);
    Var out = nn::dropout(in, 0.5, d, false);
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(out.value()[i] == x[i]);
    CHECK(check_inputs(
              [&](Graph& g2, const std::vector<Var>& v) {
                Rng d2(1);
                return sum(mul(nn::dropout(v[0], 0.5, d2, false), g2.constant(m)));
              },
              {x}) < kGradTol);
  }
  SUBCASE("active path with a fixed mask") {
    CHECK(check_inputs(
              [&](Graph& g2, const std::vector<Var>& v) {
                Rng d2(2);
                return sum(mul(nn::dropout(v[0], 0.3, d2, true), g2.constant(m)));
              },
              {x}) < kGradTol);
  }
  SUBCASE("keep rate and scaling") {
    Graph g;
    Rng d(3);
    const Tensor64 ones({1, 20000}, 1.0);
    const Tensor64& out = nn::dropout(g.constant(ones), 0.25, d, true).value();
    int kept = 0;
    for (double v : out.values()) {
      if (v != 0.0) {
        ++kept;
        CHECK(v == doctest::Approx(1.0 / 0.75));
      }
    }
    CHECK(kept / 20000.0 == doctest::Approx(0.75).epsilon(0.02));
  }
  SUBCASE("bad rate") {
    Graph g;
    Rng d(4);
    CHECK_THROWS_AS(nn::dropout(g.constant(x), 1.0, d, true), ConfigError);
  }
}

TEST_CASE("backward requires a scalar") {
  Graph g;
  Var x = g.input(Tensor64({2, 2}, 1.0));
  CHECK_THROWS_AS(g.backward(x), ContractError);
}

TEST_CASE("shared parameters accumulate one gradient") {
  ParamStore store;
  store.set("w", Tensor({1, 1}, std::vector<float>{3.0f}));
  Graph g;
  Var a = g.param(store, "w");
  Var b = g.param(store, "w");
  CHECK(a.id() == b.id());
  g.backward(sum(mul(a, b)));
  CHECK(g.param_grads().at("w")[0] == doctest::Approx(6.0));
}

TEST_CASE("adam first step moves by the learning rate") {
  ParamStore store;
  store.set("x", Tensor::scalar(1.0f));
  AdamState state = AdamState::for_prefix(store, "");
  GradStore grads;
  grads.emplace("x", Tensor64::scalar(1.0));
  adam_step(store, grads, state, 0.1);
  CHECK(store.at("x")[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(state.t == 1);

  GradStore missing;
  CHECK_THROWS_AS(adam_step(store, missing, state, 0.1), ContractError);

  ParamStore before = store;
  adam_step(store, grads, state, 0.0);
  CHECK(store == before);
}

TEST_CASE("checkpoint round trip is exact") {
  Rng rng(51);
  ParamStore store;
  store.set("a.weight", test::random_float_tensor({3, 4}, rng));
  store.set("b", test::random_float_tensor({5}, rng));
  OptState opt;
  opt.groups["g"] = AdamState::for_prefix(store, "a.");
  opt.groups["g"].t = 17;
  opt.groups["g"].m.at("a.weight")[2] = 0.25f;
  const auto dir = test::scratch_dir("ckpt");
  save_checkpoint(store, opt, dir);
  const auto [loaded, lopt] = load_checkpoint(dir);
  CHECK(loaded == store);
  CHECK(lopt == opt);

  const auto dir2 = test::scratch_dir("ckpt2");
  save_checkpoint(loaded, lopt, dir2);
  for (const char* f : {"manifest.json", "params.bin", "optstate.bin"}) {
    std::ifstream x(dir / f, std::ios::binary), y(dir2 / f, std::ios::binary);
    const std::string sx((std::istreambuf_iterator<char>(x)), {}), sy((std::istreambuf_iterator<char>(y)), {});
    CHECK(sx == sy);
  }

  std::filesystem::resize_file(dir / "params.bin", 8);
  CHECK_THROWS_AS(load_checkpoint(dir), DataError);
  CHECK_THROWS_AS(load_checkpoint(test::scratch_dir("ckpt_missing")), DataError);
}

TEST_CASE("top-k ordering and tie breaking") {
  const std::vector<float> scores{0.5f, 2.0f, 2.0f, -1.0f, 3.0f};
  const std::vector<std::int64_t> ids{10, 30, 20, 40, 50};
  const auto top = top_k_positions(scores, ids, 3);
  CHECK(top == std::vector<std::size_t>{4, 2, 1});
  CHECK_THROWS_AS(top_k_positions(scores, ids, 6), ContractError);
}

TEST_CASE("plackett-luce stage probabilities by hand") {
  // weights 1, 2, 1 -> first pick 1: 2/4, then pick 0: 1/2.
  const std::vector<float> scores{0.0f, static_cast<float>(std::log(2.0)), 0.0f};
  const std::vector<std::size_t> slate{1, 0};
  const auto p = plackett_luce_stage_probs(scores, slate);
  CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(plackett_luce_log_prob(scores, slate) == doctest::Approx(std::log(0.25)).epsilon(1e-7));
  const std::vector<std::size_t> repeat{1, 1};
  CHECK_THROWS_AS(plackett_luce_stage_probs(scores, repeat), ContractError);
}
