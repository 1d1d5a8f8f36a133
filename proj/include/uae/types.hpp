#pragma once

#include <Eigen/Core>

namespace uae {

using Index = Eigen::Index;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using ColVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Row-major 64-bit dense matrix; rows are samples wherever a matrix holds data.
using Matrix = RowMatrix<double>;
using Vector = ColVector<double>;

// Contiguous view of any row-major matrix as a flat parameter vector.
template <typename Scalar>
inline Eigen::Map<ColVector<Scalar>> flat(RowMatrix<Scalar>& m) {
  return {m.data(), m.size()};
}

template <typename Scalar>
inline Eigen::Map<const ColVector<Scalar>> flat(const RowMatrix<Scalar>& m) {
  return {m.data(), m.size()};
}

}  // namespace uae
