#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "uae/errors.hpp"
#include "uae/linalg.hpp"
#include "uae/rng.hpp"
#include "uae/types.hpp"

namespace uae {

// Sum over all ordered pairs (i, j) of (x_i - x_j)(x_i - x_j)^T, rows of `data`
// being the points. Accumulated one anchor point at a time.
template <typename Derived>
RowMatrix<typename Derived::Scalar> pairwise_scatter(const Eigen::MatrixBase<Derived>& data) {
  using Scalar = typename Derived::Scalar;
  const Index n = data.cols();
  RowMatrix<Scalar> scatter = RowMatrix<Scalar>::Zero(n, n);
  RowMatrix<Scalar> diffs(data.rows(), n);
  for (Index i = 0; i < data.rows(); ++i) {
    diffs = data.rowwise() - data.row(i);
    scatter.noalias() += diffs.transpose() * diffs;
  }
  return scatter;
}

// Biased (1/N) covariance of the rows.
template <typename Derived>
RowMatrix<typename Derived::Scalar> biased_covariance(const Eigen::MatrixBase<Derived>& data) {
  using Scalar = typename Derived::Scalar;
  const auto mean = data.colwise().mean().eval();
  const RowMatrix<Scalar> centered = data.rowwise() - mean;
  return (centered.transpose() * centered) / static_cast<Scalar>(data.rows());
}

template <typename Scalar>
Scalar soft_threshold(Scalar v, Scalar t) {
  using std::abs;
  const Scalar mag = abs(v) - t;
  if (mag <= Scalar(0)) return Scalar(0);
  return v > Scalar(0) ? mag : -mag;
}

template <typename Derived>
auto soft_threshold(const Eigen::MatrixBase<Derived>& v, typename Derived::Scalar t) {
  return v.unaryExpr([t](typename Derived::Scalar x) { return soft_threshold(x, t); });
}

struct PcaModel {
  Vector mean;
  Matrix components;  // m x n, orthonormal rows
  Vector eigenvalues; // descending, of the biased covariance

  Matrix project(const Matrix& data) const;      // N x m
  Matrix reconstruct(const Matrix& codes) const; // N x n
};

PcaModel pca_fit(const Matrix& data, Index m);

// i.i.d. N(0, 1) entries.
Matrix random_gaussian_matrix(Index m, Index n, Rng& rng);

struct LassoConfig {
  double lambda = 1.0;   // weight of the squared data term
  int max_iters = 10000;
  double tol = 1e-8;
  double step_size = 0.0;  // <= 0 selects 1 / (2 lambda L)
};

struct LassoTrace {
  std::vector<double> objective;  // objective after each iterate, starting at x0 = 0
  int iterations = 0;
};

double lasso_objective(const Vector& x, const Vector& y, const Matrix& w, double lambda);

// ISTA for argmin_x ||x||_1 + lambda ||y - W x||_2^2 from x0 = 0.
Vector lasso_recover(const Vector& y, const Matrix& w, const LassoConfig& cfg, LassoTrace* trace = nullptr);

// Recovers every row of `measurements` (N x m); rows run in parallel.
Matrix lasso_recover_batch(const Matrix& measurements, const Matrix& w, const LassoConfig& cfg);

struct LassoTuning {
  double lambda = 0.0;
  std::vector<double> grid;
  std::vector<double> mean_l2;  // validation error per grid entry
};

// Picks the lambda with the lowest mean per-row l2 error on (signals,
// measurements); ties keep the smaller lambda.
LassoTuning tune_lasso_lambda(const Matrix& signals, const Matrix& measurements, const Matrix& w,
                              const LassoConfig& base, const std::vector<double>& grid = {0.01, 0.1, 1.0, 10.0});

}  // namespace uae
