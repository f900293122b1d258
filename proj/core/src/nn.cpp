// SPDX-License-Identifier: Apache-2.0
#include "mmrf/nn.hpp"

#include <cmath>

namespace mmrf::nn {

Var activate(Var x, Activation kind) {
  switch (kind) {
    case Activation::identity:
      return x;
    case Activation::relu:
      return relu(x);
    case Activation::sigmoid:
      return sigmoid(x);
    case Activation::tanh:
      return mmrf::tanh(x);
    case Activation::softmax:
      return softmax(x);
  }
  return x;
}

void init_linear(ParamStore& store, const std::string& prefix, std::int64_t in, std::int64_t out, Rng& rng,
                 double gain) {
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(in + out));
  Tensor w({out, in});
  for (auto& v : w.values()) v = static_cast<float>(rng.uniform(-limit, limit));
  store.set(prefix + ".weight", std::move(w));
  store.set(prefix + ".bias", Tensor({out}));
}

Var linear(const Binder& p, const std::string& prefix, Var x) {
  return mmrf::linear(x, p(prefix + ".weight"), p(prefix + ".bias"));
}

void init_mlp(ParamStore& store, const std::string& prefix, const std::vector<std::int64_t>& widths, Rng& rng) {
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    init_linear(store, prefix + ".layer" + std::to_string(k), widths[k], widths[k + 1], rng);
  }
}

Var mlp(const Binder& p, const std::string& prefix, std::size_t layers, Var x, Activation hidden,
        Activation output) {
  for (std::size_t k = 0; k < layers; ++k) {
    x = linear(p, prefix + ".layer" + std::to_string(k), x);
    x = activate(x, k + 1 == layers ? output : hidden);
  }
  return x;
}

AttentionResult multihead_attention(Var query, const std::vector<Var>& keys, const std::vector<Var>& values,
                                    int heads, const AttentionParams& params, bool scaled) {
  if (keys.empty()) throw ContractError("multihead_attention: no keys to attend over");
  if (keys.size() != values.size()) {
    throw DimensionError("multihead_attention: " + std::to_string(keys.size()) + " keys but " +
                         std::to_string(values.size()) + " values");
  }
  const std::int64_t proj = params.w_query.rows();
  if (heads <= 0 || proj % heads != 0) {
    throw DimensionError("multihead_attention: " + std::to_string(heads) + " heads do not divide projection width " +
                         std::to_string(proj));
  }
  if (params.w_key.rows() != proj || params.w_value.rows() != proj) {
    throw DimensionError("multihead_attention: projection widths differ: " + shape_str(params.w_query.shape()) +
                         ", " + shape_str(params.w_key.shape()) + ", " + shape_str(params.w_value.shape()));
  }
  Var q = matmul_nt(query, params.w_query);
  std::vector<Var> k, v;
  for (std::size_t j = 0; j < keys.size(); ++j) {
    k.push_back(matmul_nt(keys[j], params.w_key));
    v.push_back(relu(matmul_nt(values[j], params.w_value)));
  }
  return attend(q, k, v, heads, scaled);
}

AttentionResult attend(Var q, const std::vector<Var>& k, const std::vector<Var>& v, int heads, bool scaled) {
  if (k.empty()) throw ContractError("attend: no keys to attend over");
  if (k.size() != v.size()) throw DimensionError("attend: key and value counts differ");
  const std::int64_t proj = q.cols();
  if (heads <= 0 || proj % heads != 0) {
    throw DimensionError("attend: " + std::to_string(heads) + " heads do not divide projection width " +
                         std::to_string(proj));
  }
  const std::int64_t head_dim = proj / heads;
  AttentionResult out;
  std::vector<Var> head_ctx;
  for (int h = 0; h < heads; ++h) {
    const std::int64_t off = h * head_dim;
    Var qh = slice_cols(q, off, head_dim);
    std::vector<Var> logits;
    for (const Var& kj : k) logits.push_back(rowdot(qh, slice_cols(kj, off, head_dim)));
    Var l = logits.size() == 1 ? logits.front() : concat_cols(logits);
    if (scaled) l = scale(l, 1.0 / std::sqrt(static_cast<double>(head_dim)));
    Var alpha = softmax(l);
    Var ctx;
    for (std::size_t j = 0; j < v.size(); ++j) {
      Var term = mul_col(slice_cols(v[j], off, head_dim), slice_cols(alpha, static_cast<std::int64_t>(j), 1));
      ctx = ctx.valid() ? add(ctx, term) : term;
    }
    head_ctx.push_back(ctx);
    out.weights.push_back(alpha);
  }
  out.context = heads == 1 ? head_ctx.front() : concat_cols(head_ctx);
  return out;
}

void init_gru(ParamStore& store, const std::string& prefix, std::int64_t in, std::int64_t hidden, Rng& rng) {
  const double limit = 1.0 / std::sqrt(static_cast<double>(hidden));
  auto fill = [&](Shape shape) {
    Tensor t(std::move(shape));
    for (auto& x : t.values()) x = static_cast<float>(rng.uniform(-limit, limit));
    return t;
  };
  store.set(prefix + ".w_ih", fill({3 * hidden, in}));
  store.set(prefix + ".w_hh", fill({3 * hidden, hidden}));
  store.set(prefix + ".b_ih", fill({3 * hidden}));
  store.set(prefix + ".b_hh", fill({3 * hidden}));
}

Var gru_step(const Binder& p, const std::string& prefix, Var hidden, Var input) {
  const std::int64_t h = hidden.cols();
  const Var w_hh = p(prefix + ".w_hh");
  if (w_hh.rows() != 3 * h || w_hh.cols() != h) {
    throw DimensionError("gru_step: hidden " + shape_str(hidden.shape()) + " incompatible with w_hh " +
                         shape_str(w_hh.shape()));
  }
  const Var gi = mmrf::linear(input, p(prefix + ".w_ih"), p(prefix + ".b_ih"));
  const Var gh = mmrf::linear(hidden, w_hh, p(prefix + ".b_hh"));
  const Var r = sigmoid(add(slice_cols(gi, 0, h), slice_cols(gh, 0, h)));
  const Var z = sigmoid(add(slice_cols(gi, h, h), slice_cols(gh, h, h)));
  const Var n = mmrf::tanh(add(slice_cols(gi, 2 * h, h), mul(r, slice_cols(gh, 2 * h, h))));
  // (1 - z) h + z n  ==  h + z (n - h)
  return add(hidden, mul(z, sub(n, hidden)));
}

Var dropout(Var x, double rate, Rng& rng, bool train) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!train || rate == 0.0) return x;
  Tensor64 mask(x.shape());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (auto& m : mask.values()) m = rng.bernoulli(rate) ? 0.0 : keep_scale;
  return mul_const(x, mask);
}

}  // namespace mmrf::nn
