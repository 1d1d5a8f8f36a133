#pragma once

#include <cstdint>

#include "uae/types.hpp"

namespace uae {

struct AdamState {
  std::int64_t step = 0;
  Vector first_moment;
  Vector second_moment;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(Index size, double learning_rate = 1e-3)
      : first_moment(Vector::Zero(size)), second_moment(Vector::Zero(size)), lr(learning_rate) {}
};

// One bias-corrected Adam step in place. Throws NumericError naming the first
// non-finite gradient index; params and state are untouched in that case.
void adam_update(Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grads, AdamState& state);

}  // namespace uae
