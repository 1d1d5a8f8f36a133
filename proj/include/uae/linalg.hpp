#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "uae/errors.hpp"
#include "uae/types.hpp"

namespace uae {

template <typename DerivedA, typename DerivedB>
auto matmul(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  RowMatrix<Scalar> out = a * b;
  return out;
}

template <typename Scalar>
struct SymEig {
  ColVector<Scalar> values;     // descending
  RowMatrix<Scalar> vectors;    // one unit eigenvector per row
};

struct JacobiOptions {
  double tolerance = 1e-12;  // off-diagonal Frobenius norm relative to ||S||_F
  int max_sweeps = 100;
  double symmetry_tolerance = 1e-9;
};

// Top-m eigenpairs of a symmetric matrix by cyclic Jacobi rotations.
// Each returned vector has its largest-magnitude component (first one on ties)
// non-negative.
template <typename Derived>
SymEig<typename Derived::Scalar> sym_eig_topm(const Eigen::MatrixBase<Derived>& s, Index m,
                                              const JacobiOptions& opts = {}) {
  using Scalar = typename Derived::Scalar;
  using std::abs;
  using std::sqrt;
  const Index n = s.rows();
  if (s.cols() != n) throw DimensionError("sym_eig_topm: matrix is not square");
  if (m < 0 || m > n) throw ValidationError("sym_eig_topm: m must lie in [0, n]");

  RowMatrix<Scalar> a = s;
  const Scalar scale = std::max<Scalar>(Scalar(1), a.cwiseAbs().maxCoeff());
  if (n > 0 && (a - a.transpose()).cwiseAbs().maxCoeff() > Scalar(opts.symmetry_tolerance) * scale) {
    throw ValidationError("sym_eig_topm: matrix is not symmetric");
  }
  if (!a.allFinite()) throw NumericError("sym_eig_topm: non-finite entry");

  RowMatrix<Scalar> v = RowMatrix<Scalar>::Identity(n, n);
  const Scalar total = a.norm();
  auto off_norm = [&] {
    Scalar acc(0);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        if (i != j) acc += a(i, j) * a(i, j);
    return sqrt(acc);
  };

  bool converged = total == Scalar(0);
  for (int sweep = 0; sweep < opts.max_sweeps && !converged; ++sweep) {
    if (off_norm() <= Scalar(opts.tolerance) * total) {
      converged = true;
      break;
    }
    for (Index p = 0; p + 1 < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const Scalar apq = a(p, q);
        if (apq == Scalar(0)) continue;
        const Scalar theta = (a(q, q) - a(p, p)) / (Scalar(2) * apq);
        const Scalar t = (theta >= 0 ? Scalar(1) : Scalar(-1)) / (abs(theta) + sqrt(theta * theta + Scalar(1)));
        const Scalar c = Scalar(1) / sqrt(t * t + Scalar(1));
        const Scalar sn = t * c;
        for (Index k = 0; k < n; ++k) {
          const Scalar akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const Scalar apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        a(p, q) = a(q, p) = Scalar(0);
        for (Index k = 0; k < n; ++k) {
          const Scalar vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
    }
  }
  if (!converged && off_norm() > Scalar(opts.tolerance) * total) {
    throw NumericError("sym_eig_topm: Jacobi iteration did not converge in " +
                       std::to_string(opts.max_sweeps) + " sweeps");
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));
  std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) { return a(i, i) > a(j, j); });

  SymEig<Scalar> out{ColVector<Scalar>(m), RowMatrix<Scalar>(m, n)};
  for (Index r = 0; r < m; ++r) {
    const Index col = order[static_cast<std::size_t>(r)];
    out.values[r] = a(col, col);
    ColVector<Scalar> vec = v.col(col);
    vec /= vec.norm();
    Index lead = 0;
    for (Index k = 1; k < n; ++k)
      if (abs(vec[k]) > abs(vec[lead])) lead = k;
    if (vec[lead] < Scalar(0)) vec = -vec;
    out.vectors.row(r) = vec.transpose();
  }
  return out;
}

// Largest eigenvalue of W^T W (squared spectral norm) by power iteration.
double largest_gram_eigenvalue(const Matrix& w, double tolerance = 1e-13, int max_iters = 100000);

// Central differences, one coordinate at a time: (f(p + h e_i) - f(p - h e_i)) / 2h.
template <typename Fn>
Vector finite_diff_grad(Fn&& f, const Vector& params, double h) {
  if (!(h > 0.0)) throw ValidationError("finite_diff_grad: h must be positive");
  Vector grad(params.size());
  Vector probe = params;
  for (Index i = 0; i < params.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(static_cast<const Vector&>(probe));
    probe[i] = orig - h;
    const double down = f(static_cast<const Vector&>(probe));
    probe[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_grad: non-finite objective at coordinate " + std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace uae
