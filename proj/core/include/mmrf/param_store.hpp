// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mmrf/tensor.hpp"

namespace mmrf {

/// Named parameter tensors, iterated in lexicographic name order.
class ParamStore {
 public:
  using Map = std::map<std::string, Tensor, std::less<>>;

  void set(const std::string& name, Tensor value) { entries_[name] = std::move(value); }
  bool contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  void erase(std::string_view name);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::int64_t total_numel() const;
  std::vector<std::string> names() const;

  /// Entries whose name starts with `prefix`.
  ParamStore slice(std::string_view prefix) const;
  /// Copies every entry of `other` in, overwriting on name clash.
  void merge(const ParamStore& other);

  Map::iterator begin() { return entries_.begin(); }
  Map::iterator end() { return entries_.end(); }
  Map::const_iterator begin() const { return entries_.begin(); }
  Map::const_iterator end() const { return entries_.end(); }

  bool operator==(const ParamStore&) const = default;

 private:
  Map entries_;
};

/// Gradients keyed like a ParamStore, accumulated in double.
using GradStore = std::map<std::string, Tensor64, std::less<>>;

inline bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

}  // namespace mmrf
