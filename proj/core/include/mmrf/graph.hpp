// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mmrf/param_store.hpp"
#include "mmrf/tensor.hpp"

namespace mmrf {

class Graph;

/// Handle to a node recorded on a Graph. Cheap to copy; only valid while
/// the owning Graph is alive.
class Var {
 public:
  Var() = default;

  const Tensor64& value() const;
  const Shape& shape() const { return value().shape(); }
  std::int64_t rows() const { return value().rows(); }
  std::int64_t cols() const { return value().cols(); }
  Graph& graph() const { return *g_; }
  int id() const { return id_; }
  bool valid() const { return g_ != nullptr; }
  bool requires_grad() const;

 private:
  friend class Graph;
  Var(Graph* g, int id) : g_(g), id_(id) {}

  Graph* g_ = nullptr;
  int id_ = -1;
};

/// Tape for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so that order is already a
/// topological sort; `backward` walks it once in reverse. All values are
/// held in double. Parameters enter as float from a ParamStore and their
/// gradients come back out through `param_grads`.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor64 value);
  Var constant(const Tensor& value) { return constant(value.cast<double>()); }
  /// Differentiable leaf not tied to a parameter (used by gradient checks).
  Var input(Tensor64 value);
  /// Differentiable leaf bound to `store[name]`. Requesting the same name
  /// twice returns the same node, so shared weights accumulate one gradient.
  Var param(const ParamStore& store, const std::string& name);
  /// Parameter value entered without gradient tracking.
  Var frozen(const ParamStore& store, const std::string& name);

  /// Reverse pass from a scalar node. Throws ContractError otherwise.
  void backward(Var loss);

  /// Gradient accumulated at `v` by the last backward (zeros if none).
  Tensor64 grad(Var v) const;
  GradStore param_grads() const;

  std::size_t size() const { return nodes_.size(); }

  // Op-implementer interface.
  Var emit(Tensor64 value, std::vector<int> parents, BackwardFn fn);
  const Tensor64& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  /// Gradient buffer for node `id`, allocated on first touch.
  Tensor64& grad_buffer(int id);

 private:
  struct Node {
    Tensor64 value;
    std::vector<int> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<Tensor64> grads_;
  std::map<std::string, int, std::less<>> params_;
  std::map<std::string, int, std::less<>> frozen_;
};

// ---- Differentiable operations -------------------------------------------
// Unless noted, operands are 2-D [rows, cols]; "row" operands broadcast a
// single [cols] or [1, cols] tensor over every row.

/// x · wᵀ for x [B, in] and w [out, in].
Var matmul_nt(Var x, Var w);
/// x · wᵀ + b, fused.
Var linear(Var x, Var w, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_row(Var a, Var row);
/// a [B, F] scaled per row by c [B, 1].
Var mul_col(Var a, Var c);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// a multiplied elementwise by a constant mask of the same shape.
Var mul_const(Var a, const Tensor64& mask);
Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var square(Var a);
/// Softmax over the last axis.
Var softmax(Var a);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var a, std::int64_t start, std::int64_t len);
/// Row-wise dot product: [B, F] x [B, F] -> [B, 1].
Var rowdot(Var a, Var b);
/// Sum of all entries -> scalar.
Var sum(Var a);
Var mean(Var a);

}  // namespace mmrf
