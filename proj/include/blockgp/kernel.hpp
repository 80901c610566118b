#pragma once

#include "blockgp/types.hpp"

#include <cmath>

namespace blockgp {

template <typename Scalar>
Scalar kernel_from_distance(Scalar distance, const Hyperparameters<Scalar>& hp) {
  return hp.output_scale * std::exp(-distance / (Scalar(2) * hp.lengthscale * hp.lengthscale));
}

// k(x, x') = alpha * exp(-||x - x'||_2 / (2 lambda^2)).
// The exponent uses the plain (non-squared) Euclidean distance.
template <typename Scalar, typename DerivedA, typename DerivedB>
Scalar kernel_eval(const Eigen::MatrixBase<DerivedA>& x, const Eigen::MatrixBase<DerivedB>& x_prime,
                   const Hyperparameters<Scalar>& hp) {
  if (x.size() != x_prime.size() || x.size() < 1) {
    throw ShapeError("kernel_eval: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                     std::to_string(x_prime.size()) + ")");
  }
  Scalar sq = 0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const Scalar diff = x(k) - x_prime(k);
    sq += diff * diff;
  }
  return kernel_from_distance(std::sqrt(sq), hp);
}

/// Dense covariance between the rows of `a` and the rows of `b`.
///
/// With `add_noise` the noise variance is placed on the diagonal; that is
/// only meaningful when `a` and `b` are the same sample set, which is checked
/// by shape and value.
template <typename Scalar>
Matrix<Scalar> covar_dense(const Matrix<Scalar>& a, const Matrix<Scalar>& b, const Hyperparameters<Scalar>& hp,
                           bool add_noise = false) {
  if (a.cols() != b.cols()) {
    throw ShapeError("covar_dense: sample dimensions differ (" + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.cols()) + ")");
  }
  if (add_noise && (a.rows() != b.rows() || a != b)) {
    throw UsageError("covar_dense: add_noise requires identical sample sets");
  }
  const bool same = (&a == &b) || (a.rows() == b.rows() && a == b);
  Matrix<Scalar> out(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      if (same && i < j) {
        out(i, j) = out(j, i);
        continue;
      }
      out(i, j) = kernel_eval(a.row(i), b.row(j), hp);
    }
  }
  if (add_noise) out.diagonal().array() += hp.noise;
  return out;
}

}  // namespace blockgp
