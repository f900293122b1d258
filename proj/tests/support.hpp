// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mmrf/graph.hpp"
#include "mmrf/nn.hpp"
#include "mmrf/rng.hpp"

namespace mmrf::test {

/// Max relative error tolerated between analytic and central-difference
/// gradients.
inline constexpr double kGradTol = 1e-4;

inline double rel_err(double a, double b) {
  const double denom = std::max({std::fabs(a), std::fabs(b), 1e-6});
  return std::fabs(a - b) / denom;
}

inline Tensor64 random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor64 t(std::move(shape));
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

inline Tensor random_float_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<float>(scale * rng.normal());
  return t;
}

/// Builds a scalar from differentiable leaves.
using LeafFn = std::function<Var(Graph&, const std::vector<Var>&)>;

/// Largest relative error over every entry of every input.
inline double check_inputs(const LeafFn& f, const std::vector<Tensor64>& inputs, double h = 1e-5) {
  Graph g;
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(g.input(t));
  g.backward(f(g, leaves));
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor64 analytic = g.grad(leaves[k]);
    for (std::int64_t j = 0; j < inputs[k].numel(); ++j) {
      auto eval = [&](double delta) {
        std::vector<Tensor64> moved = inputs;
        moved[k][j] += delta;
        Graph g2;
        std::vector<Var> l2;
        for (const auto& t : moved) l2.push_back(g2.constant(t));
        return f(g2, l2).value()[0];
      };
      const double numeric = (eval(h) - eval(-h)) / (2.0 * h);
      worst = std::max(worst, rel_err(analytic[j], numeric));
    }
  }
  return worst;
}

/// Scalar built from the parameters bound through `p`.
using ParamFn = std::function<Var(const nn::Binder& p)>;

/// Gradient check against stored float parameters. The step actually taken
/// is recovered from the float rounding so the difference quotient uses the
/// exact displacement. Only names selected by `pick` are checked; at most
/// `per_tensor` entries of each.
inline double check_params(ParamStore& store, const ParamFn& f, const std::function<bool(const std::string&)>& pick,
                           std::int64_t per_tensor = 6, double h = 1e-5) {
  Graph g;
  const nn::Binder p{g, store, true, ""};
  g.backward(f(p));
  const GradStore grads = g.param_grads();
  auto value = [&]() {
    Graph g2;
    const nn::Binder p2{g2, store, false, ""};
    return f(p2).value()[0];
  };
  double worst = 0.0;
  for (const auto& name : store.names()) {
    if (!pick(name)) continue;
    Tensor& t = store.at(name);
    const auto it = grads.find(name);
    const std::int64_t stride = std::max<std::int64_t>(1, t.numel() / per_tensor);
    for (std::int64_t j = 0; j < t.numel(); j += stride) {
      const float orig = t[j];
      t[j] = static_cast<float>(orig + h);
      const double up_step = static_cast<double>(t[j]) - orig;
      const double up = value();
      t[j] = static_cast<float>(orig - h);
      const double down_step = static_cast<double>(orig) - t[j];
      const double down = value();
      t[j] = orig;
      const double numeric = (up - down) / (up_step + down_step);
      const double analytic = it == grads.end() ? 0.0 : it->second[j];
      if (std::getenv("MMRF_GRAD_DEBUG") != nullptr && rel_err(analytic, numeric) > kGradTol) {
        std::fprintf(stderr, "%s[%lld] analytic %.10g numeric %.10g\n", name.c_str(), static_cast<long long>(j),
                     analytic, numeric);
      }
      worst = std::max(worst, rel_err(analytic, numeric));
    }
  }
  return worst;
}

/// Fresh scratch directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mmrf_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace mmrf::test
