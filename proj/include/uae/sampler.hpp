#pragma once

#include <cstdint>
#include <vector>

#include "uae/network.hpp"
#include "uae/rng.hpp"

namespace uae {

struct ChainConfig {
  Index burn_in = 1000;
  Index n_samples = 1;
  Index thin = 10;
  double decoder_sample_std = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GibbsStep {
  Vector x_next;
  Vector y;
};

// y ~ N(W f(x), sigma^2 I), then x' = g(y) + std_dec * N(0, I). Decoder noise
// is only drawn when std_dec > 0.
GibbsStep gibbs_step(const Vector& x, const UaeModel& model, double std_dec, Rng& rng);

// burn_in transitions, then every thin-th state of n_samples * thin more.
Matrix sample_chain(const Vector& x0, const UaeModel& model, const ChainConfig& cfg);

// One chain per start; chain c uses seed derive_seed(cfg.seed, c).
std::vector<Matrix> sample_chains(const std::vector<Vector>& starts, const UaeModel& model, const ChainConfig& cfg);

}  // namespace uae
