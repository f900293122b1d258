// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace mmrf {

/// Positions of the k highest scores, best first. Equal scores are ordered
/// by ascending `ids`.
std::vector<std::size_t> top_k_positions(std::span<const float> scores, std::span<const std::int64_t> ids,
                                         std::size_t k);

/// Plackett-Luce stage probabilities of drawing `slate` (positions into
/// `scores`, in order) without replacement from softmax(scores / temperature).
/// Entry j is P(slate[j] | slate[0..j) already drawn).
std::vector<double> plackett_luce_stage_probs(std::span<const float> scores, std::span<const std::size_t> slate,
                                              double temperature = 1.0);

/// log of the product of the stage probabilities.
double plackett_luce_log_prob(std::span<const float> scores, std::span<const std::size_t> slate,
                              double temperature = 1.0);

}  // namespace mmrf
