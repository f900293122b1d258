// SPDX-License-Identifier: Apache-2.0
#include "mmrf/tensor.hpp"

#include <cmath>

#include "mmrf/param_store.hpp"

namespace mmrf {

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::int64_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

bool all_finite(std::span<const float> v) {
  for (float x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

Tensor& ParamStore::at(std::string_view name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

const Tensor& ParamStore::at(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

void ParamStore::erase(std::string_view name) {
  auto it = entries_.find(name);
  if (it != entries_.end()) entries_.erase(it);
}

std::int64_t ParamStore::total_numel() const {
  std::int64_t n = 0;
  for (const auto& [_, t] : entries_) n += t.numel();
  return n;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

ParamStore ParamStore::slice(std::string_view prefix) const {
  ParamStore out;
  for (auto it = entries_.lower_bound(prefix); it != entries_.end() && starts_with(it->first, prefix); ++it) {
    out.entries_.emplace(it->first, it->second);
  }
  return out;
}

void ParamStore::merge(const ParamStore& other) {
  for (const auto& [name, t] : other.entries_) entries_[name] = t;
}

}  // namespace mmrf
