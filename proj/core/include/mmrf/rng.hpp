// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string_view>

namespace mmrf {

/// Counter-based splittable generator.
///
/// A stream is a (key, counter) pair; draw n is a pure function of the key
/// and n, so results never depend on which thread consumes a stream.
/// `split` derives an independent child key, which is how every stochastic
/// operation receives its own stream. The distributions below are written
/// out by hand because the standard ones are implementation-defined and
/// would break cross-platform reproducibility.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : key_(mix(seed ^ 0x6a09e667f3bcc908ULL)) {}

  Rng split(std::uint64_t id) const {
    Rng child;
    child.key_ = mix(key_ ^ mix(id + 0x632be59bd9b4e019ULL));
    return child;
  }
  Rng split(std::string_view tag) const { return split(hash(tag)); }

  std::uint64_t next_u64() {
    ++counter_;
    return mix(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
  }
  result_type operator()() { return next_u64(); }
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller; always consumes two draws.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  /// FNV-1a folded through `mix`.
  static std::uint64_t hash(std::string_view bytes);
  static std::uint64_t hash_bytes(std::span<const std::byte> bytes);

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace mmrf
