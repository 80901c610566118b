#pragma once

#include "blockgp/dataset.hpp"
#include "blockgp/kernel.hpp"
#include "blockgp/pcg.hpp"
#include "blockgp/structured.hpp"
#include "blockgp/train.hpp"
#include "blockgp/types.hpp"

#include <algorithm>
#include <cmath>

namespace blockgp {

template <typename Scalar>
struct Posterior {
  Vector<Scalar> mean;
  Vector<Scalar> variance;
  Vector<Scalar> lower;  // mean - 2 sqrt(variance)
  Vector<Scalar> upper;  // mean + 2 sqrt(variance)
  long clamped = 0;      // negative variances reset to zero
};

struct PredictConfig {
  CgConfig cg;
  Eigen::Index chunk = 256;
  JitterPolicy jitter;
};

template <typename Scalar>
struct PosteriorResult {
  Posterior<Scalar> posterior;
  IterationStats iterations;
};

/// Predictive mean and marginal variance at `x_test` under the structured
/// covariance K'' of the training set, with a zero prior mean.
template <typename Scalar>
PosteriorResult<Scalar> posterior(const ClusteredDataset<Scalar>& data, const Matrix<Scalar>& x_test,
                                  const Hyperparameters<Scalar>& hp, const PredictConfig& cfg = {}) {
  data.validate();
  if (x_test.rows() > 0 && x_test.cols() != data.dim()) {
    throw ShapeError("posterior: test inputs have dimension " + std::to_string(x_test.cols()) + ", expected " +
                     std::to_string(data.dim()));
  }
  if (cfg.chunk < 1) throw UsageError("posterior: chunk width must be positive");

  const BlockCholesky<Scalar> bc = factorize_blocks(build_structured(data, hp), cfg.jitter);
  const PreconditionedOperator<Scalar> op(bc, build_coupling(data.reps, hp), shortcut::Baseline{});

  PosteriorResult<Scalar> out;
  const auto solve = [&](const Matrix<Scalar>& rhs, const char* what) {
    CgResult<Scalar> res = batch_cg<Scalar>(op, rhs, cfg.cg.tol, cfg.cg.max_iter);
    if (!res.report.converged) {
      throw ConvergenceError(std::string("posterior ") + what + " solve did not converge in " +
                             std::to_string(res.report.iterations) + " iterations");
    }
    out.iterations.add(res.report.iterations);
    return res.x;
  };

  const Matrix<Scalar> y = data.y_train;
  const Matrix<Scalar> weights = apply_r_inverse(bc, solve(apply_r_inverse_transpose(bc, y), "mean"));

  const Eigen::Index n_test = x_test.rows();
  Posterior<Scalar>& post = out.posterior;
  post.mean.resize(n_test);
  post.variance.resize(n_test);
  for (Eigen::Index start = 0; start < n_test; start += cfg.chunk) {
    const Eigen::Index width = std::min(cfg.chunk, n_test - start);
    const Matrix<Scalar> xs = x_test.middleRows(start, width);
    const Matrix<Scalar> k_star = covar_dense(data.x_train, xs, hp, false);  // n x width
    post.mean.segment(start, width).noalias() = k_star.transpose() * weights.col(0);

    // k_*^T K''^{-1} k_* = b^T A^{-1} b with b = R^{-T} k_*.
    const Matrix<Scalar> rhs = apply_r_inverse_transpose(bc, k_star);
    const Matrix<Scalar> sol = solve(rhs, "variance");
    for (Eigen::Index j = 0; j < width; ++j) {
      Scalar v = hp.output_scale - rhs.col(j).dot(sol.col(j));
      if (v < 0) {
        v = 0;
        ++post.clamped;
      }
      post.variance(start + j) = v;
    }
  }
  const Vector<Scalar> sd = post.variance.array().sqrt();
  post.lower = post.mean - Scalar(2) * sd;
  post.upper = post.mean + Scalar(2) * sd;
  return out;
}

template <typename Scalar>
Scalar rmse(const Vector<Scalar>& mean, const Vector<Scalar>& y_test) {
  if (mean.size() == 0) throw UsageError("rmse: empty input");
  if (mean.size() != y_test.size()) throw ShapeError("rmse: length mismatch");
  return std::sqrt((mean - y_test).squaredNorm() / static_cast<Scalar>(mean.size()));
}

}  // namespace blockgp
