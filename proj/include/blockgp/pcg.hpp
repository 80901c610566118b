#pragma once

// Batched conjugate gradient over an abstract SPD operator.
//
// All right-hand sides are iterated together but each column carries its own
// step length and direction update. A column is frozen once its residual
// norm reaches the tolerance.

#include "blockgp/types.hpp"

#include <cmath>
#include <vector>

namespace blockgp {

struct CgConfig {
  double tol = 0.01;
  int max_iter = 2000;
};

struct SolveReport {
  int iterations = 0;
  std::vector<double> final_residual_norms;
  bool converged = false;
  bool breakdown = false;  // a column hit p^T A p <= 0
};

template <typename Scalar>
struct CgResult {
  Matrix<Scalar> x;
  SolveReport report;
};

struct NoObserver {
  template <typename M>
  void operator()(int, const M&) const {}
};

/// Solve op(X) = B column-wise from a zero initial guess.
///
/// `op` maps an n x k matrix to an n x k matrix. The iteration count is the
/// number of operator applications. `observe(iter, X)` is called after each
/// iteration.
template <typename Scalar, typename Op, typename Observer = NoObserver>
CgResult<Scalar> batch_cg(const Op& op, const Matrix<Scalar>& rhs, double tol, int max_iter,
                          Observer&& observe = {}) {
  if (!(tol > 0)) throw UsageError("batch_cg: tolerance must be positive");
  if (max_iter < 0) throw UsageError("batch_cg: max_iter must be non-negative");
  const Eigen::Index n = rhs.rows();
  const Eigen::Index m = rhs.cols();

  CgResult<Scalar> res;
  res.x = Matrix<Scalar>::Zero(n, m);
  Matrix<Scalar> r = rhs;
  Matrix<Scalar> p = rhs;
  std::vector<Scalar> rr(static_cast<std::size_t>(m));
  std::vector<bool> active(static_cast<std::size_t>(m));
  const auto tol_s = static_cast<Scalar>(tol);
  Eigen::Index remaining = 0;
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    rr[jj] = r.col(j).squaredNorm();
    active[jj] = std::sqrt(rr[jj]) > tol_s;
    remaining += active[jj] ? 1 : 0;
  }

  int iter = 0;
  while (remaining > 0 && iter < max_iter) {
    const Matrix<Scalar> ap = op(p);
    ++iter;
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto jj = static_cast<std::size_t>(j);
      if (!active[jj]) continue;
      const Scalar pap = p.col(j).dot(ap.col(j));
      if (!(pap > 0) || !std::isfinite(pap)) {
        res.report.breakdown = true;
        active[jj] = false;
        --remaining;
        continue;
      }
      const Scalar alpha = rr[jj] / pap;
      res.x.col(j) += alpha * p.col(j);
      r.col(j) -= alpha * ap.col(j);
      const Scalar rr_new = r.col(j).squaredNorm();
      if (std::sqrt(rr_new) <= tol_s) {
        active[jj] = false;
        --remaining;
        rr[jj] = rr_new;
        continue;
      }
      const Scalar beta = rr_new / rr[jj];
      p.col(j) = r.col(j) + beta * p.col(j);
      rr[jj] = rr_new;
    }
    observe(iter, res.x);
  }

  res.report.iterations = iter;
  res.report.final_residual_norms.resize(static_cast<std::size_t>(m));
  bool all_ok = true;
  for (Eigen::Index j = 0; j < m; ++j) {
    const double norm = std::sqrt(static_cast<double>(rr[static_cast<std::size_t>(j)]));
    res.report.final_residual_norms[static_cast<std::size_t>(j)] = norm;
    all_ok = all_ok && norm <= tol;
  }
  res.report.converged = all_ok && !res.report.breakdown;
  return res;
}

}  // namespace blockgp
