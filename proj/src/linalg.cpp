#include "uae/linalg.hpp"

#include "uae/rng.hpp"

namespace uae {

double largest_gram_eigenvalue(const Matrix& w, double tolerance, int max_iters) {
  const Index n = w.cols();
  if (n == 0 || w.rows() == 0) return 0.0;
  if (!w.allFinite()) throw NumericError("largest_gram_eigenvalue: non-finite matrix");

  // Fixed pseudo-random start so the iteration is not orthogonal to the top
  // eigenvector for structured inputs.
  Rng rng(0x5eedULL);
  Vector v = rng.normal_vector(n);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    Vector wv = w * v;
    Vector next = w.transpose() * wv;
    const double est = v.dot(next);
    const double norm = next.norm();
    if (norm == 0.0) return 0.0;
    next /= norm;
    if (it > 0 && std::abs(est - lambda) <= tolerance * std::max(1.0, std::abs(est))) return est;
    lambda = est;
    v = next;
  }
  throw NumericError("largest_gram_eigenvalue: power iteration did not converge in " +
                     std::to_string(max_iters) + " iterations");
}

}  // namespace uae
