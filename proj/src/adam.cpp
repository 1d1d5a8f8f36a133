#include "uae/adam.hpp"

#include <cmath>
#include <string>

#include "uae/errors.hpp"

namespace uae {

void adam_update(Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grads, AdamState& state) {
  const Index n = params.size();
  if (grads.size() != n || state.first_moment.size() != n || state.second_moment.size() != n) {
    throw DimensionError("adam_update: params, grads and moments must have the same size");
  }
  for (Index i = 0; i < n; ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError("adam_update: non-finite gradient at parameter index " + std::to_string(i));
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads;
  state.second_moment = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads.cwiseAbs2();
  for (Index i = 0; i < n; ++i) {
    const double m_hat = state.first_moment[i] / correction1;
    const double v_hat = state.second_moment[i] / correction2;
    params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

}  // namespace uae
