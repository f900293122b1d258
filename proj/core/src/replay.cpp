// SPDX-License-Identifier: Apache-2.0
#include "mmrf/replay.hpp"

#include "mmrf/error.hpp"

namespace mmrf {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay buffer capacity must be >= 1");
}

void ReplayBuffer::push(Transition t) {
  ++inserted_;
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return;
  }
  items_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= items_.size()) throw ContractError("replay buffer index out of range");
  return items_[(head_ + i) % items_.size()];
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (items_.empty() && n > 0) throw ContractError("cannot sample from an empty replay buffer");
  std::vector<const Transition*> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(&items_[rng.below(items_.size())]);
  return out;
}

}  // namespace mmrf
