// SPDX-License-Identifier: Apache-2.0
#include "mmrf/graph.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

namespace mmrf {

const Tensor64& Var::value() const { return g_->value(id_); }
bool Var::requires_grad() const { return g_->requires_grad(id_); }

Var Graph::constant(Tensor64 value) { return emit(std::move(value), {}, nullptr); }

Var Graph::input(Tensor64 value) {
  Var v = emit(std::move(value), {}, nullptr);
  nodes_.back().requires_grad = true;
  return v;
}

Var Graph::param(const ParamStore& store, const std::string& name) {
  if (auto it = params_.find(name); it != params_.end()) return Var(this, it->second);
  Var v = input(store.at(name).cast<double>());
  params_.emplace(name, v.id());
  return v;
}

Var Graph::frozen(const ParamStore& store, const std::string& name) {
  if (auto it = frozen_.find(name); it != frozen_.end()) return Var(this, it->second);
  Var v = constant(store.at(name).cast<double>());
  frozen_.emplace(name, v.id());
  return v;
}

Var Graph::emit(Tensor64 value, std::vector<int> parents, BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  for (int p : parents) {
    if (nodes_[static_cast<std::size_t>(p)].requires_grad) node.requires_grad = true;
  }
  if (node.requires_grad) {
    node.parents = std::move(parents);
    node.backward = std::move(fn);
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor64& Graph::grad_buffer(int id) {
  auto& g = grads_[static_cast<std::size_t>(id)];
  if (g.empty() && nodes_[static_cast<std::size_t>(id)].value.numel() > 0) {
    g = Tensor64(nodes_[static_cast<std::size_t>(id)].value.shape());
  }
  return g;
}

void Graph::backward(Var loss) {
  if (loss.g_ != this) throw ContractError("backward: loss belongs to another graph");
  if (loss.value().numel() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  grads_.assign(nodes_.size(), Tensor64{});
  grad_buffer(loss.id_)[0] = 1.0;
  for (int id = loss.id_; id >= 0; --id) {
    auto& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.requires_grad || !node.backward || grads_[static_cast<std::size_t>(id)].empty()) continue;
    node.backward(*this, id);
  }
}

Tensor64 Graph::grad(Var v) const {
  if (static_cast<std::size_t>(v.id_) < grads_.size() && !grads_[static_cast<std::size_t>(v.id_)].empty()) {
    return grads_[static_cast<std::size_t>(v.id_)];
  }
  return Tensor64(v.value().shape());
}

GradStore Graph::param_grads() const {
  GradStore out;
  for (const auto& [name, id] : params_) out.emplace(name, grad(Var(const_cast<Graph*>(this), id)));
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void check_same(const Var& a, const Var& b, const char* op) {
  if (&a.graph() != &b.graph()) throw ContractError(std::string(op) + ": operands on different graphs");
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void check_row(const Var& a, const Var& row, const char* op) {
  if (row.value().numel() != a.cols()) {
    throw DimensionError(std::string(op) + ": row operand " + shape_str(row.shape()) +
                         " does not broadcast over " + shape_str(a.shape()));
  }
}

// Applies f elementwise; df(y, x) gives dy/dx from output and input.
template <typename F, typename DF>
Var unary(Var a, F f, DF df) {
  Graph& g = a.graph();
  const Tensor64& x = a.value();
  Tensor64 y(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = f(x[i]);
  const int pa = a.id();
  return g.emit(std::move(y), {pa}, [pa, df](Graph& gr, int self) {
    if (!gr.requires_grad(pa)) return;
    const Tensor64& xv = gr.value(pa);
    const Tensor64& yv = gr.value(self);
    const Tensor64& gy = gr.grad_buffer(self);
    Tensor64& gx = gr.grad_buffer(pa);
    for (std::int64_t i = 0; i < xv.numel(); ++i) gx[i] += gy[i] * df(yv[i], xv[i]);
  });
}

}  // namespace

namespace {

using MatRef = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatRef = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

}  // namespace

Var matmul_nt(Var x, Var w) {
  Graph& g = x.graph();
  const Tensor64& xv = x.value();
  const Tensor64& wv = w.value();
  if (wv.shape().size() != 2 || xv.cols() != wv.cols()) {
    throw DimensionError("matmul: input " + shape_str(xv.shape()) + " incompatible with weight " +
                         shape_str(wv.shape()));
  }
  const std::int64_t rows = xv.rows(), in = xv.cols(), out = wv.rows();
  Tensor64 y({rows, out});
  MatRef(y.data(), rows, out).noalias() = ConstMatRef(xv.data(), rows, in) * ConstMatRef(wv.data(), out, in).transpose();
  const int px = x.id(), pw = w.id();
  return g.emit(std::move(y), {px, pw}, [px, pw, rows, in, out](Graph& gr, int self) {
    const ConstMatRef gy(gr.grad_buffer(self).data(), rows, out);
    if (gr.requires_grad(px)) {
      MatRef(gr.grad_buffer(px).data(), rows, in).noalias() += gy * ConstMatRef(gr.value(pw).data(), out, in);
    }
    if (gr.requires_grad(pw)) {
      MatRef(gr.grad_buffer(pw).data(), out, in).noalias() += gy.transpose() * ConstMatRef(gr.value(px).data(), rows, in);
    }
  });
}

Var linear(Var x, Var w, Var b) {
  const Tensor64& wv = w.value();
  if (wv.shape().size() != 2 || x.cols() != wv.cols()) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(wv.shape()));
  }
  if (b.value().numel() != wv.rows()) {
    throw DimensionError("linear: bias " + shape_str(b.shape()) + " incompatible with weight " +
                         shape_str(wv.shape()));
  }
  return add_row(matmul_nt(x, w), b);
}

Var add(Var a, Var b) {
  check_same(a, b, "add");
  Tensor64 y = a.value();
  const Tensor64& bv = b.value();
  for (std::int64_t i = 0; i < y.numel(); ++i) y[i] += bv[i];
  const int pa = a.id(), pb = b.id();
  return a.graph().emit(std::move(y), {pa, pb}, [pa, pb](Graph& gr, int self) {
    const Tensor64& gy = gr.grad_buffer(self);
    for (int p : {pa, pb}) {
      if (!gr.requires_grad(p)) continue;
      Tensor64& gp = gr.grad_buffer(p);
      for (std::int64_t i = 0; i < gy.numel(); ++i) gp[i] += gy[i];
    }
  });
}

Var sub(Var a, Var b) {
  check_same(a, b, "sub");
  Tensor64 y = a.value();
  const Tensor64& bv = b.value();
  for (std::int64_t i = 0; i < y.numel(); ++i) y[i] -= bv[i];
  const int pa = a.id(), pb = b.id();
  return a.graph().emit(std::move(y), {pa, pb}, [pa, pb](Graph& gr, int self) {
    const Tensor64& gy = gr.grad_buffer(self);
    if (gr.requires_grad(pa)) {
      Tensor64& ga = gr.grad_buffer(pa);
      for (std::int64_t i = 0; i < gy.numel(); ++i) ga[i] += gy[i];
    }
    if (gr.requires_grad(pb)) {
      Tensor64& gb = gr.grad_buffer(pb);
      for (std::int64_t i = 0; i < gy.numel(); ++i) gb[i] -= gy[i];
    }
  });
}

Var mul(Var a, Var b) {
  check_same(a, b, "mul");
  Tensor64 y = a.value();
  const Tensor64& bv = b.value();
  for (std::int64_t i = 0; i < y.numel(); ++i) y[i] *= bv[i];
  const int pa = a.id(), pb = b.id();
  return a.graph().emit(std::move(y), {pa, pb}, [pa, pb](Graph& gr, int self) {
    const Tensor64& gy = gr.grad_buffer(self);
    const Tensor64& av = gr.value(pa);
    const Tensor64& bv2 = gr.value(pb);
    if (gr.requires_grad(pa)) {
      Tensor64& ga = gr.grad_buffer(pa);
      for (std::int64_t i = 0; i < gy.numel(); ++i) ga[i] += gy[i] * bv2[i];
    }
    if (gr.requires_grad(pb)) {
      Tensor64& gb = gr.grad_buffer(pb);
      for (std::int64_t i = 0; i < gy.numel(); ++i) gb[i] += gy[i] * av[i];
    }
  });
}

Var add_row(Var a, Var row) {
  check_row(a, row, "add_row");
  Tensor64 y = a.value();
  const Tensor64& rv = row.value();
  const std::int64_t rows = y.rows(), cols = y.cols();
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) y[r * cols + c] += rv[c];
  }
  const int pa = a.id(), pr = row.id();
  return a.graph().emit(std::move(y), {pa, pr}, [pa, pr, rows, cols](Graph& gr, int self) {
    const Tensor64& gy = gr.grad_buffer(self);
    if (gr.requires_grad(pa)) {
      Tensor64& ga = gr.grad_buffer(pa);
      for (std::int64_t i = 0; i < gy.numel(); ++i) ga[i] += gy[i];
    }
    if (gr.requires_grad(pr)) {
      Tensor64& gb = gr.grad_buffer(pr);
      for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t c = 0; c < cols; ++c) gb[c] += gy[r * cols + c];
      }
    }
  });
}

Var mul_col(Var a, Var c) {
  if (c.cols() != 1 || c.rows() != a.rows()) {
    throw DimensionError("mul_col: column " + shape_str(c.shape()) + " does not match " + shape_str(a.shape()));
  }
  Tensor64 y = a.value();
  const Tensor64& cv = c.value();
  const std::int64_t rows = y.rows(), cols = y.cols();
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t k = 0; k < cols; ++k) y[r * cols + k] *= cv[r];
  }
  const int pa = a.id(), pc = c.id();
  return a.graph().emit(std::move(y), {pa, pc}, [pa, pc, rows, cols](Graph& gr, int self) {
    const Tensor64& gy = gr.grad_buffer(self);
    const Tensor64& av = gr.value(pa);
    const Tensor64& cv2 = gr.value(pc);
    if (gr.requires_grad(pa)) {
      Tensor64& ga = gr.grad_buffer(pa);
      for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t k = 0; k < cols; ++k) ga[r * cols + k] += gy[r * cols + k] * cv2[r];
      }
    }
    if (gr.requires_grad(pc)) {
      Tensor64& gc = gr.grad_buffer(pc);
      for (std::int64_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::int64_t k = 0; k < cols; ++k) acc += gy[r * cols + k] * av[r * cols + k];
        gc[r] += acc;
      }
    }
  });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var mul_const(Var a, const Tensor64& mask) {
  if (mask.shape() != a.shape()) {
    throw DimensionError("mul_const: mask " + shape_str(mask.shape()) + " vs " + shape_str(a.shape()));
  }
  Tensor64 y = a.value();
  for (std::int64_t i = 0; i < y.numel(); ++i) y[i] *= mask[i];
  const int pa = a.id();
  return a.graph().emit(std::move(y), {pa}, [pa, mask](Graph& gr, int self) {
    const Tensor64& gy = gr.grad_buffer(self);
    Tensor64& ga = gr.grad_buffer(pa);
    for (std::int64_t i = 0; i < gy.numel(); ++i) ga[i] += gy[i] * mask[i];
  });
}

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double, double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double y, double) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double y, double) { return 1.0 - y * y; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double, double x) { return 2.0 * x; });
}

Var softmax(Var a) {
  Tensor64 y = a.value();
  const std::int64_t rows = y.rows(), cols = y.cols();
  for (std::int64_t r = 0; r < rows; ++r) {
    double* yr = y.data() + r * cols;
    const double mx = *std::max_element(yr, yr + cols);
    double z = 0.0;
    for (std::int64_t c = 0; c < cols; ++c) {
      yr[c] = std::exp(yr[c] - mx);
      z += yr[c];
    }
    for (std::int64_t c = 0; c < cols; ++c) yr[c] /= z;
  }
  const int pa = a.id();
  return a.graph().emit(std::move(y), {pa}, [pa, rows, cols](Graph& gr, int self) {
    const Tensor64& gy = gr.grad_buffer(self);
    const Tensor64& yv = gr.value(self);
    Tensor64& ga = gr.grad_buffer(pa);
    for (std::int64_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::int64_t c = 0; c < cols; ++c) dot += gy[r * cols + c] * yv[r * cols + c];
      for (std::int64_t c = 0; c < cols; ++c) ga[r * cols + c] += yv[r * cols + c] * (gy[r * cols + c] - dot);
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  const std::int64_t rows = parts.front().rows();
  std::int64_t total = 0;
  std::vector<int> ids;
  std::vector<std::int64_t> widths;
  for (const Var& p : parts) {
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts.front().shape()) + " vs " +
                           shape_str(p.shape()));
    }
    ids.push_back(p.id());
    widths.push_back(p.cols());
    total += p.cols();
  }
  Tensor64 y({rows, total});
  std::int64_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor64& pv = parts[k].value();
    for (std::int64_t r = 0; r < rows; ++r) {
      std::copy_n(pv.data() + r * widths[k], widths[k], y.data() + r * total + off);
    }
    off += widths[k];
  }
  return parts.front().graph().emit(std::move(y), ids, [ids, widths, rows, total](Graph& gr, int self) {
    const Tensor64& gy = gr.grad_buffer(self);
    std::int64_t o = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (gr.requires_grad(ids[k])) {
        Tensor64& gp = gr.grad_buffer(ids[k]);
        for (std::int64_t r = 0; r < rows; ++r) {
          for (std::int64_t c = 0; c < widths[k]; ++c) gp[r * widths[k] + c] += gy[r * total + o + c];
        }
      }
      o += widths[k];
    }
  });
}

Var slice_cols(Var a, std::int64_t start, std::int64_t len) {
  const std::int64_t rows = a.rows(), cols = a.cols();
  if (start < 0 || len <= 0 || start + len > cols) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + len) +
                         ") out of range for " + shape_str(a.shape()));
  }
  Tensor64 y({rows, len});
  const Tensor64& av = a.value();
  for (std::int64_t r = 0; r < rows; ++r) std::copy_n(av.data() + r * cols + start, len, y.data() + r * len);
  const int pa = a.id();
  return a.graph().emit(std::move(y), {pa}, [pa, rows, cols, start, len](Graph& gr, int self) {
    const Tensor64& gy = gr.grad_buffer(self);
    Tensor64& ga = gr.grad_buffer(pa);
    for (std::int64_t r = 0; r < rows; ++r) {
      for (std::int64_t c = 0; c < len; ++c) ga[r * cols + start + c] += gy[r * len + c];
    }
  });
}

Var rowdot(Var a, Var b) {
  check_same(a, b, "rowdot");
  const std::int64_t rows = a.rows(), cols = a.cols();
  Tensor64 y({rows, 1});
  const Tensor64& av = a.value();
  const Tensor64& bv = b.value();
  for (std::int64_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::int64_t c = 0; c < cols; ++c) acc += av[r * cols + c] * bv[r * cols + c];
    y[r] = acc;
  }
  const int pa = a.id(), pb = b.id();
  return a.graph().emit(std::move(y), {pa, pb}, [pa, pb, rows, cols](Graph& gr, int self) {
    const Tensor64& gy = gr.grad_buffer(self);
    const Tensor64& av2 = gr.value(pa);
    const Tensor64& bv2 = gr.value(pb);
    if (gr.requires_grad(pa)) {
      Tensor64& ga = gr.grad_buffer(pa);
      for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t c = 0; c < cols; ++c) ga[r * cols + c] += gy[r] * bv2[r * cols + c];
      }
    }
    if (gr.requires_grad(pb)) {
      Tensor64& gb = gr.grad_buffer(pb);
      for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t c = 0; c < cols; ++c) gb[r * cols + c] += gy[r] * av2[r * cols + c];
      }
    }
  });
}

Var sum(Var a) {
  double acc = 0.0;
  for (double x : a.value().values()) acc += x;
  const int pa = a.id();
  return a.graph().emit(Tensor64::scalar(acc), {pa}, [pa](Graph& gr, int self) {
    const double gy = gr.grad_buffer(self)[0];
    Tensor64& ga = gr.grad_buffer(pa);
    for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += gy;
  });
}

Var mean(Var a) {
  const auto n = a.value().numel();
  if (n == 0) throw ContractError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

}  // namespace mmrf
