#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uae/network.hpp"
#include "uae/rng.hpp"

namespace uae {

struct GradCheckOptions {
  Index batch_size = 4;
  double step = 1e-5;
  double tolerance = 1e-4;
  // Relative error is |a - b| / max(|a|, |b|, floor).
  double floor = 1e-6;
};

struct GradCheckResult {
  std::string architecture;
  Index parameters = 0;
  double max_rel_error = 0.0;
  Index worst_index = -1;
  bool passed = false;
};

// Random small architectures: n <= 10, hidden sizes <= 16, optional
// acquisition net, either decoder family, sigma > 0.
std::vector<ModelSpec> random_architectures(std::size_t count, Rng& rng);

std::string describe(const ModelSpec& spec);

// Backprop against central differences of the minibatch loss, every parameter,
// with the measurement noise held fixed.
GradCheckResult gradient_check(const ModelSpec& spec, std::uint64_t seed, const GradCheckOptions& opts = {});

}  // namespace uae
