#include "uae/baselines.hpp"

#include <limits>

#include "uae/parallel.hpp"

namespace uae {

Matrix PcaModel::project(const Matrix& data) const {
  if (data.cols() != mean.size()) throw DimensionError("PcaModel::project: wrong input dimension");
  return (data.rowwise() - mean.transpose()) * components.transpose();
}

Matrix PcaModel::reconstruct(const Matrix& codes) const {
  if (codes.cols() != components.rows()) throw DimensionError("PcaModel::reconstruct: wrong code dimension");
  Matrix out = codes * components;
  out.rowwise() += mean.transpose();
  return out;
}

PcaModel pca_fit(const Matrix& data, Index m) {
  if (m < 1 || m > data.cols()) throw ValidationError("pca_fit: m must lie in [1, n]");
  if (data.rows() < 2) throw ValidationError("pca_fit: need at least two points");
  PcaModel model;
  model.mean = data.colwise().mean().transpose();
  const Matrix cov = biased_covariance(data);
  auto eig = sym_eig_topm(cov, m);
  model.components = std::move(eig.vectors);
  model.eigenvalues = std::move(eig.values);
  return model;
}

Matrix random_gaussian_matrix(Index m, Index n, Rng& rng) {
  if (m < 1 || n < 1) throw ValidationError("random_gaussian_matrix: m and n must be positive");
  return rng.normal_matrix(m, n, 1.0);
}

double lasso_objective(const Vector& x, const Vector& y, const Matrix& w, double lambda) {
  return x.lpNorm<1>() + lambda * (y - w * x).squaredNorm();
}

Vector lasso_recover(const Vector& y, const Matrix& w, const LassoConfig& cfg, LassoTrace* trace) {
  if (w.rows() != y.size()) throw DimensionError("lasso_recover: W rows must equal measurement length");
  if (!(cfg.lambda > 0.0)) throw ValidationError("lasso_recover: lambda must be positive");
  if (!(cfg.tol > 0.0)) throw ValidationError("lasso_recover: tol must be positive");

  Vector x = Vector::Zero(w.cols());
  if (trace) {
    trace->objective.assign(1, lasso_objective(x, y, w, cfg.lambda));
    trace->iterations = 0;
  }
  double step = cfg.step_size;
  if (step <= 0.0) {
    const double lip = largest_gram_eigenvalue(w);
    if (lip == 0.0) return x;
    step = 1.0 / (2.0 * cfg.lambda * lip);
  }
  const double gain = 2.0 * cfg.lambda * step;
  const Matrix wt = w.transpose();

  for (int it = 0; it < cfg.max_iters; ++it) {
    Vector next = soft_threshold(x + gain * (wt * (y - w * x)), step);
    const double change = (next - x).lpNorm<Eigen::Infinity>();
    x = std::move(next);
    if (trace) {
      trace->objective.push_back(lasso_objective(x, y, w, cfg.lambda));
      trace->iterations = it + 1;
    }
    if (change < cfg.tol) break;
  }
  return x;
}

Matrix lasso_recover_batch(const Matrix& measurements, const Matrix& w, const LassoConfig& cfg) {
  if (measurements.cols() != w.rows()) throw DimensionError("lasso_recover_batch: measurement width != W rows");
  Matrix out(measurements.rows(), w.cols());
  // Resolve the step once; every row shares W.
  LassoConfig shared = cfg;
  if (shared.step_size <= 0.0) {
    const double lip = largest_gram_eigenvalue(w);
    if (lip == 0.0) return Matrix::Zero(measurements.rows(), w.cols());
    shared.step_size = 1.0 / (2.0 * cfg.lambda * lip);
  }
  parallel_for(static_cast<std::size_t>(measurements.rows()), [&](std::size_t i) {
    const auto row = static_cast<Index>(i);
    out.row(row) = lasso_recover(measurements.row(row).transpose(), w, shared).transpose();
  });
  return out;
}

LassoTuning tune_lasso_lambda(const Matrix& signals, const Matrix& measurements, const Matrix& w,
                              const LassoConfig& base, const std::vector<double>& grid) {
  if (grid.empty()) throw ValidationError("tune_lasso_lambda: empty grid");
  if (signals.rows() != measurements.rows() || signals.rows() == 0) {
    throw DimensionError("tune_lasso_lambda: signals and measurements need the same non-zero row count");
  }
  LassoTuning tuning;
  tuning.grid = grid;
  double best = std::numeric_limits<double>::infinity();
  for (double lambda : grid) {
    LassoConfig cfg = base;
    cfg.lambda = lambda;
    cfg.step_size = 0.0;
    const Matrix recovered = lasso_recover_batch(measurements, w, cfg);
    const double err = (recovered - signals).rowwise().norm().mean();
    tuning.mean_l2.push_back(err);
    if (err < best) {
      best = err;
      tuning.lambda = lambda;
    }
  }
  return tuning;
}

}  // namespace uae
