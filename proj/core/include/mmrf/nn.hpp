// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "mmrf/graph.hpp"
#include "mmrf/rng.hpp"

namespace mmrf::nn {

enum class Activation { identity, relu, sigmoid, tanh, softmax };

Var activate(Var x, Activation kind);

/// Resolves parameter names against a store, either as trainable leaves
/// or as frozen constants (target networks, critics during actor steps).
/// `prefix` is prepended to every name (target networks live under
/// "target.").
struct Binder {
  Graph& graph;
  const ParamStore& store;
  bool trainable = true;
  std::string prefix;

  Var operator()(const std::string& name) const {
    return trainable ? graph.param(store, prefix + name) : graph.frozen(store, prefix + name);
  }
  Binder frozen() const { return Binder{graph, store, false, prefix}; }
};

/// `prefix.weight` [out, in] with Glorot-uniform entries and `prefix.bias`
/// [out] zeroed.
void init_linear(ParamStore& store, const std::string& prefix, std::int64_t in, std::int64_t out, Rng& rng,
                 double gain = 1.0);
Var linear(const Binder& p, const std::string& prefix, Var x);

/// Layers `prefix.layer{k}` mapping widths[k] -> widths[k+1].
void init_mlp(ParamStore& store, const std::string& prefix, const std::vector<std::int64_t>& widths, Rng& rng);
/// `hidden` after every layer but the last, `output` after the last.
Var mlp(const Binder& p, const std::string& prefix, std::size_t layers, Var x,
        Activation hidden = Activation::relu, Activation output = Activation::identity);

struct AttentionParams {
  Var w_query;  // [P, Dq]
  Var w_key;    // [P, Dk]
  Var w_value;  // [P, Dv]
};

struct AttentionResult {
  Var context;                // [B, P]
  std::vector<Var> weights;   // per head, [B, n_keys]
};

/// Multi-head attention with a ReLU on the value projections:
///   context = sum_j alpha_j relu(W_v v_j),  alpha ∝ exp((W_k k_j)ᵀ (W_q q))
/// evaluated independently on each of `heads` equal slices of the
/// projection. The 1/sqrt(d) temperature is off unless `scaled`.
AttentionResult multihead_attention(Var query, const std::vector<Var>& keys, const std::vector<Var>& values,
                                    int heads, const AttentionParams& params, bool scaled = false);
/// The same on already projected inputs: `q` [B, P], `k[j]` [B, P] and
/// `v[j]` [B, P] with the value ReLU applied.
AttentionResult attend(Var q, const std::vector<Var>& k, const std::vector<Var>& v, int heads, bool scaled = false);

/// Gated recurrent unit parameters under `prefix`: w_ih [3H, in],
/// w_hh [3H, H], b_ih [3H], b_hh [3H]; gate blocks ordered reset, update,
/// candidate.
void init_gru(ParamStore& store, const std::string& prefix, std::int64_t in, std::int64_t hidden, Rng& rng);
/// h' = (1 - z) ⊙ h + z ⊙ n; an update gate of 1 takes the candidate.
Var gru_step(const Binder& p, const std::string& prefix, Var hidden, Var input);

/// Inverted dropout. Identity when `train` is false or rate is 0.
Var dropout(Var x, double rate, Rng& rng, bool train);

}  // namespace mmrf::nn
