#pragma once

#include <cstdint>

#include "uae/types.hpp"

namespace uae {

// xoshiro256** seeded through splitmix64.
//
// Stream definition (portable across implementations):
//   * state[0..3] = four successive splitmix64 outputs starting from `seed`.
//   * next_u64() is the reference xoshiro256** step.
//   * uniform() = (next_u64() >> 11) * 2^-53, in [0, 1).
//   * normal() uses Box-Muller on a fresh pair: u1 = 1 - uniform() in (0, 1],
//     u2 = uniform(); r = sqrt(-2 ln u1); returns r*cos(2 pi u2) and caches
//     r*sin(2 pi u2) for the following call.
//   * uniform_index(n) uses Lemire's multiply-shift with rejection.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  std::uint64_t uniform_index(std::uint64_t n);

  // Fills row-major, so the draw order is reproducible.
  Matrix normal_matrix(Index rows, Index cols, double stddev = 1.0);
  Vector normal_vector(Index size, double stddev = 1.0);

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

// Deterministic child seed for an independent sub-stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace uae
