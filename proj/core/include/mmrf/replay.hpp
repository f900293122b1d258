// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "mmrf/rng.hpp"

namespace mmrf {

struct Transition {
  std::vector<float> state;
  std::vector<float> action;
  double reward = 0.0;
  std::vector<float> next_state;
  bool done = false;
  bool impression = true;  // false for simulated non-impression samples
  int agent = 0;

  bool operator==(const Transition&) const = default;
};

/// Fixed-capacity ring buffer; the oldest entry is overwritten once full.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  /// `n` indices drawn uniformly with replacement.
  std::vector<const Transition*> sample(std::size_t n, Rng& rng) const;

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t inserted() const { return inserted_; }
  bool empty() const { return items_.empty(); }
  /// Logical index 0 is the oldest entry still held.
  const Transition& at(std::size_t i) const;

 private:
  std::size_t capacity_;
  std::vector<Transition> items_;
  std::size_t head_ = 0;
  std::uint64_t inserted_ = 0;
};

}  // namespace mmrf
