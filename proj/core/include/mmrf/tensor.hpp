// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mmrf/error.hpp"

namespace mmrf {

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& shape);
std::int64_t shape_numel(const Shape& shape);

/// Dense row-major tensor. Float storage is used for parameters, logs and
/// checkpoints; the autodiff graph computes in double (see graph.hpp).
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
    check_shape();
    data_.assign(static_cast<std::size_t>(shape_numel(shape_)), fill);
  }
  BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_str(shape_));
    }
  }

  static BasicTensor scalar(T v) { return BasicTensor({1}, std::vector<T>{v}); }
  /// A [1, n] row.
  static BasicTensor row(std::vector<T> v) {
    const auto n = static_cast<std::int64_t>(v.size());
    return BasicTensor({1, n}, std::move(v));
  }
  static BasicTensor matrix(std::int64_t rows, std::int64_t cols, std::vector<T> v) {
    return BasicTensor({rows, cols}, std::move(v));
  }

  template <typename U>
  BasicTensor<U> cast() const {
    return BasicTensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  const Shape& shape() const { return shape_; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }
  /// Size of the last axis.
  std::int64_t cols() const { return shape_.empty() ? 1 : shape_.back(); }
  /// Product of all leading axes.
  std::int64_t rows() const { return cols() == 0 ? 0 : numel() / cols(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  T operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  T& at(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * cols() + c)]; }
  T at(std::int64_t r, std::int64_t c) const { return data_[static_cast<std::size_t>(r * cols() + c)]; }
  std::span<T> row_span(std::int64_t r) { return std::span<T>(data_).subspan(r * cols(), cols()); }
  std::span<const T> row_span(std::int64_t r) const {
    return std::span<const T>(data_).subspan(r * cols(), cols());
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  BasicTensor reshaped(Shape shape) const { return BasicTensor(std::move(shape), data_); }

  bool operator==(const BasicTensor&) const = default;

 private:
  void check_shape() const {
    for (auto d : shape_) {
      if (d < 0) throw DimensionError("negative dimension in shape " + shape_str(shape_));
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

bool all_finite(std::span<const float> v);
bool all_finite(std::span<const double> v);

}  // namespace mmrf
