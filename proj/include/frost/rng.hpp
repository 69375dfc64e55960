#pragma once

#include <cstdint>

namespace frost {

// SplitMix64 run in counter mode: output i is finalize(seed + i*GOLDEN).
// Counter-based so a stream can be reproduced from (seed, index) alone and
// the same sequence comes out on every platform. All derived samplers below
// avoid libm (see detmath) so corrupted images are bit-identical everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), counter_(0) {}

  std::uint64_t next_u64();

  // Uniform double in [0, 1), 53 random bits.
  double uniform();

  // Uniform double in [lo, hi).
  double uniform(double lo, double hi);

  // Uniform integer in [0, n), n > 0.
  std::uint64_t index(std::uint64_t n);

  // Standard normal via a 12-fold uniform sum (exact unit variance,
  // support [-6, 6], no libm). Plenty for synthesizing pixel noise.
  double normal();

  // Poisson(lambda) by Knuth's product-of-uniforms method, lambda <= ~70.
  std::uint64_t poisson(double lambda);

  // Independent child stream; used to give each image / stage its own seed.
  Rng fork(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }

  // Stateless helpers for deriving seeds.
  static std::uint64_t mix(std::uint64_t x);
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace frost
