// SPDX-License-Identifier: Apache-2.0
#include "mmrf/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mmrf/error.hpp"

namespace mmrf {

std::vector<std::size_t> top_k_positions(std::span<const float> scores, std::span<const std::int64_t> ids,
                                         std::size_t k) {
  if (scores.size() != ids.size()) throw DimensionError("top_k: scores and ids differ in length");
  if (k > scores.size()) throw ContractError("top_k: k exceeds the number of candidates");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
  order.resize(k);
  return order;
}

std::vector<double> plackett_luce_stage_probs(std::span<const float> scores, std::span<const std::size_t> slate,
                                              double temperature) {
  if (!(temperature > 0.0)) throw ContractError("plackett_luce: temperature must be positive");
  const double mx = static_cast<double>(*std::max_element(scores.begin(), scores.end()));
  std::vector<double> w(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    w[i] = std::exp((static_cast<double>(scores[i]) - mx) / temperature);
  }
  std::vector<double> out;
  out.reserve(slate.size());
  std::vector<char> taken(scores.size(), 0);
  for (std::size_t pos : slate) {
    if (pos >= scores.size()) throw ContractError("plackett_luce: slate position out of range");
    if (taken[pos]) throw ContractError("plackett_luce: slate repeats a position");
    double remaining = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!taken[i]) remaining += w[i];
    }
    out.push_back(w[pos] / remaining);
    taken[pos] = 1;
  }
  return out;
}

double plackett_luce_log_prob(std::span<const float> scores, std::span<const std::size_t> slate,
                              double temperature) {
  double lp = 0.0;
  for (double p : plackett_luce_stage_probs(scores, slate, temperature)) lp += std::log(p);
  return lp;
}

}  // namespace mmrf
