#pragma once

// Log-determinant of K'' through the block-Cholesky compensation
//
//   log|K''| = 2 sum_i log|R_i| + tr log(A),   A = R^{-T} K'' R^{-1},
//
// with the trace estimated from Rademacher probes and log(A) replaced by the
// [2/2] Pade approximant 3(A^2 - I)(A^2 + 4A + I)^{-1}.

#include "blockgp/pcg.hpp"
#include "blockgp/structured.hpp"
#include "blockgp/types.hpp"

#include <cstdint>
#include <random>

namespace blockgp {

template <typename Scalar>
struct HutchinsonProbes {
  Matrix<Scalar> z;  // n x m, entries in {-1, +1}
  std::uint64_t seed = 0;

  [[nodiscard]] Eigen::Index m() const { return z.cols(); }
  [[nodiscard]] Eigen::Index n() const { return z.rows(); }
};

template <typename Scalar>
HutchinsonProbes<Scalar> hutchinson_gen(Eigen::Index n, Eigen::Index m, std::uint64_t seed) {
  if (n < 1 || m < 1) throw UsageError("hutchinson_gen: n and m must be positive");
  HutchinsonProbes<Scalar> probes;
  probes.seed = seed;
  probes.z.resize(n, m);
  std::mt19937_64 rng(seed);
  // Column-major fill from the top bit of each draw; portable across standard libraries.
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) probes.z(i, j) = (rng() >> 63) != 0 ? Scalar(1) : Scalar(-1);
  }
  return probes;
}

/// Scalar form of the [2/2] Pade approximant of log around 1.
template <typename Scalar>
constexpr Scalar pade_log(Scalar x) {
  return Scalar(3) * (x * x - Scalar(1)) / (x * x + Scalar(4) * x + Scalar(1));
}

struct LogdetEstimate {
  double value = 0;       // full log-determinant estimate
  double trace_term = 0;  // estimated tr log(A)
  SolveReport solve;
};

/// Estimate log|K''| given the baseline factorization and the preconditioned
/// operator A (any callable mapping n x k to n x k).
template <typename Scalar, typename PrecondOp>
LogdetEstimate estimate_logdet(const BlockCholesky<Scalar>& bc, const PrecondOp& precond,
                               const HutchinsonProbes<Scalar>& probes, const CgConfig& cfg) {
  if (probes.n() != bc.n()) {
    throw ShapeError("estimate_logdet: probes have " + std::to_string(probes.n()) + " rows, operator has " +
                     std::to_string(bc.n()));
  }
  // Q(A) W = A(AW) + 4AW + W
  const auto q_op = [&](const Matrix<Scalar>& w) -> Matrix<Scalar> {
    const Matrix<Scalar> aw = precond(w);
    Matrix<Scalar> out = precond(aw);
    out += Scalar(4) * aw + w;
    return out;
  };
  CgResult<Scalar> solved = batch_cg<Scalar>(q_op, probes.z, cfg.tol, cfg.max_iter);
  LogdetEstimate est;
  est.solve = solved.report;
  if (!solved.report.converged) {
    throw ConvergenceError("log-determinant solve did not converge in " + std::to_string(solved.report.iterations) +
                           " iterations");
  }
  // P(A) W = 3 A(AW) - 3W
  const Matrix<Scalar>& w = solved.x;
  const Matrix<Scalar> pw = Scalar(3) * precond(precond(w)) - Scalar(3) * w;
  double acc = 0;
  for (Eigen::Index j = 0; j < probes.m(); ++j) acc += static_cast<double>(probes.z.col(j).dot(pw.col(j)));
  est.trace_term = acc / static_cast<double>(probes.m());
  est.value = static_cast<double>(bc.logdet_sum) + est.trace_term;
  return est;
}

}  // namespace blockgp
