#pragma once

#include "blockgp/types.hpp"

namespace blockgp {

/// Training inputs stored cluster-contiguously: rows [i*b, (i+1)*b) of
/// `x_train` belong to cluster i and `reps.row(i)` is its representative.
template <typename Scalar>
struct ClusteredDataset {
  Matrix<Scalar> x_train;  // n x d
  Vector<Scalar> y_train;  // n
  Matrix<Scalar> reps;     // n_c x d
  Eigen::Index b = 0;
  Eigen::Index n_c = 0;
  Matrix<Scalar> x_test;  // n_test x d
  Vector<Scalar> y_test;  // n_test

  [[nodiscard]] Eigen::Index n() const { return x_train.rows(); }
  [[nodiscard]] Eigen::Index dim() const { return x_train.cols(); }

  [[nodiscard]] auto cluster(Eigen::Index i) const { return x_train.middleRows(i * b, b); }

  void validate() const {
    if (n_c < 1 || b < 1) throw ShapeError("dataset: need n_c >= 1 and b >= 1");
    if (x_train.rows() != b * n_c) {
      throw ShapeError("dataset: n_train = " + std::to_string(x_train.rows()) + " but b*n_c = " +
                       std::to_string(b * n_c) + " (clusters must have uniform size)");
    }
    if (y_train.size() != x_train.rows()) throw ShapeError("dataset: y_train length differs from x_train rows");
    if (reps.rows() != n_c || reps.cols() != x_train.cols()) {
      throw ShapeError("dataset: reps must be n_c x d");
    }
    if (x_test.rows() > 0 && x_test.cols() != x_train.cols()) {
      throw ShapeError("dataset: x_test dimension differs from x_train");
    }
    if (y_test.size() != x_test.rows()) throw ShapeError("dataset: y_test length differs from x_test rows");
  }

  template <typename Other>
  [[nodiscard]] ClusteredDataset<Other> cast() const {
    ClusteredDataset<Other> out;
    out.x_train = x_train.template cast<Other>();
    out.y_train = y_train.template cast<Other>();
    out.reps = reps.template cast<Other>();
    out.b = b;
    out.n_c = n_c;
    out.x_test = x_test.template cast<Other>();
    out.y_test = y_test.template cast<Other>();
    return out;
  }
};

}  // namespace blockgp
