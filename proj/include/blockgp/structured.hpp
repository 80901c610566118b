#pragma once

// Cluster-structured covariance, its block-Cholesky split preconditioner,
// and the matrix-free applications used by the solvers.
//
// The encoded covariance is
//
//   K'' = blockdiag(K_i + noise*I) + E (K_rep - lambda0*I) E^T
//
// where E is the n x n_c cluster indicator matrix. Off-diagonal block (i, j)
// is the constant k(r_i, r_j), and diagonal block i additionally carries
// the compensation k(r_i, r_i) - lambda0 in every entry.

#include "blockgp/dataset.hpp"
#include "blockgp/kernel.hpp"
#include "blockgp/types.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

namespace blockgp {

/// Algebraically smallest eigenvalue of a symmetric matrix.
template <typename Scalar>
Scalar smallest_eig(const Matrix<Scalar>& sym) {
  if (sym.rows() != sym.cols() || sym.rows() == 0) throw ShapeError("smallest_eig: need a non-empty square matrix");
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> solver(sym, Eigen::EigenvaluesOnly);
  return solver.eigenvalues()(0);
}

/// Representative-point coupling: K_rep, its smallest eigenvalue and the
/// per-cluster compensation k(r_i, r_i) - lambda0.
template <typename Scalar>
struct RepresentativeCoupling {
  Hyperparameters<Scalar> hp;
  Matrix<Scalar> k_rep;
  Vector<Scalar> compensation;
  Scalar lambda0 = 0;

  [[nodiscard]] Eigen::Index n_c() const { return k_rep.rows(); }

  // M = K_rep - lambda0*I: off-diagonal entries k(r_i, r_j), diagonal the compensation.
  [[nodiscard]] Matrix<Scalar> coefficients() const {
    Matrix<Scalar> m = k_rep;
    m.diagonal() = compensation;
    return m;
  }
};

template <typename Scalar>
RepresentativeCoupling<Scalar> build_coupling(const Matrix<Scalar>& reps, const Hyperparameters<Scalar>& hp) {
  RepresentativeCoupling<Scalar> c;
  c.hp = hp;
  c.k_rep = covar_dense(reps, reps, hp, false);
  c.lambda0 = smallest_eig(c.k_rep);
  // An exactly singular K_rep comes back as a tiny number of either sign.
  const Scalar floor = Scalar(c.n_c()) * std::numeric_limits<Scalar>::epsilon() * c.k_rep.cwiseAbs().maxCoeff();
  if (!(c.lambda0 > floor)) {
    throw DegenerateRepresentativesError("representative covariance is singular (smallest eigenvalue " +
                                         std::to_string(static_cast<double>(c.lambda0)) +
                                         "); representatives must be distinct");
  }
  c.compensation = c.k_rep.diagonal().array() - c.lambda0;
  return c;
}

/// Compressed storage of K'': n_c noisy diagonal blocks plus the
/// representative coupling.
template <typename Scalar>
struct StructuredKernel {
  Hyperparameters<Scalar> hp;
  Eigen::Index n_c = 0;
  Eigen::Index b = 0;
  std::vector<Matrix<Scalar>> diag_blocks;
  RepresentativeCoupling<Scalar> coupling;

  [[nodiscard]] Eigen::Index n() const { return n_c * b; }
  [[nodiscard]] Scalar lambda0() const { return coupling.lambda0; }
  [[nodiscard]] const Matrix<Scalar>& k_rep() const { return coupling.k_rep; }

  // Number of stored matrix values: n_c*b^2 + n_c^2 + n_c.
  [[nodiscard]] std::size_t storage_values() const {
    std::size_t total = 0;
    for (const auto& blk : diag_blocks) total += static_cast<std::size_t>(blk.size());
    total += static_cast<std::size_t>(coupling.k_rep.size());
    total += static_cast<std::size_t>(coupling.compensation.size());
    return total;
  }

  static constexpr std::size_t storage_values_for(std::size_t n_c, std::size_t b) {
    return n_c * b * b + n_c * n_c + n_c;
  }
};

template <typename Scalar>
StructuredKernel<Scalar> build_structured(const ClusteredDataset<Scalar>& data, const Hyperparameters<Scalar>& hp) {
  data.validate();
  StructuredKernel<Scalar> sk;
  sk.hp = hp;
  sk.n_c = data.n_c;
  sk.b = data.b;
  sk.diag_blocks.reserve(static_cast<std::size_t>(data.n_c));
  for (Eigen::Index i = 0; i < data.n_c; ++i) {
    const Matrix<Scalar> xi = data.cluster(i);
    sk.diag_blocks.push_back(covar_dense(xi, xi, hp, true));
  }
  sk.coupling = build_coupling(data.reps, hp);
  return sk;
}

namespace detail {

template <typename Scalar>
void check_rows(Eigen::Index rows, Eigen::Index n, const char* what) {
  if (rows != n) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(n) + " rows, got " + std::to_string(rows));
  }
}

// S(j, :) = w_j^T V_j  (or the plain column sums when weights are empty).
template <typename Scalar>
Matrix<Scalar> cluster_projections(const Matrix<Scalar>& v, Eigen::Index n_c, Eigen::Index b,
                                   const std::vector<Vector<Scalar>>* weights) {
  Matrix<Scalar> s(n_c, v.cols());
  for (Eigen::Index j = 0; j < n_c; ++j) {
    if (weights == nullptr) {
      s.row(j) = v.middleRows(j * b, b).colwise().sum();
    } else {
      s.row(j) = (*weights)[static_cast<std::size_t>(j)].transpose() * v.middleRows(j * b, b);
    }
  }
  return s;
}

}  // namespace detail

/// K'' V without forming K''.
template <typename Scalar>
Matrix<Scalar> apply_structured(const StructuredKernel<Scalar>& sk, const Matrix<Scalar>& v) {
  detail::check_rows<Scalar>(v.rows(), sk.n(), "apply_structured");
  const Eigen::Index b = sk.b;
  Matrix<Scalar> out(v.rows(), v.cols());
  for (Eigen::Index i = 0; i < sk.n_c; ++i) {
    out.middleRows(i * b, b).noalias() = sk.diag_blocks[static_cast<std::size_t>(i)] * v.middleRows(i * b, b);
  }
  const Matrix<Scalar> t = sk.coupling.coefficients() * detail::cluster_projections<Scalar>(v, sk.n_c, b, nullptr);
  for (Eigen::Index i = 0; i < sk.n_c; ++i) {
    out.middleRows(i * b, b).rowwise() += t.row(i);
  }
  return out;
}

struct JitterPolicy {
  double initial_factor = 1e-8;  // times the block's mean diagonal magnitude
  double growth = 10.0;
  int max_retries = 5;
};

/// Block-diagonal Cholesky factors R_i (upper, R_i^T R_i = K_i + jitter_i*I)
/// of the noisy diagonal blocks, with u_i = R_i^{-T} 1 precomputed.
template <typename Scalar>
struct BlockCholesky {
  Hyperparameters<Scalar> hp;  // baseline hyperparameters of the factored blocks
  Eigen::Index n_c = 0;
  Eigen::Index b = 0;
  std::vector<Matrix<Scalar>> factors;
  std::vector<Vector<Scalar>> u_vectors;
  std::vector<Scalar> jitter;
  Scalar logdet_sum = 0;

  [[nodiscard]] Eigen::Index n() const { return n_c * b; }
  [[nodiscard]] Scalar total_jitter() const { return std::accumulate(jitter.begin(), jitter.end(), Scalar(0)); }
  [[nodiscard]] bool jittered() const { return total_jitter() > 0; }
};

template <typename Scalar>
BlockCholesky<Scalar> factorize_blocks(const StructuredKernel<Scalar>& sk, const JitterPolicy& policy = {}) {
  BlockCholesky<Scalar> bc;
  bc.hp = sk.hp;
  bc.n_c = sk.n_c;
  bc.b = sk.b;
  bc.factors.reserve(sk.diag_blocks.size());
  bc.u_vectors.reserve(sk.diag_blocks.size());
  const Vector<Scalar> ones = Vector<Scalar>::Ones(sk.b);
  for (std::size_t i = 0; i < sk.diag_blocks.size(); ++i) {
    const Matrix<Scalar>& block = sk.diag_blocks[i];
    Eigen::LLT<Matrix<Scalar>> llt(block);
    Scalar applied = 0;
    if (llt.info() != Eigen::Success) {
      Scalar eps = static_cast<Scalar>(policy.initial_factor) * block.diagonal().cwiseAbs().mean();
      for (int retry = 0; retry < policy.max_retries; ++retry) {
        Matrix<Scalar> shifted = block;
        shifted.diagonal().array() += eps;
        llt.compute(shifted);
        if (llt.info() == Eigen::Success) {
          applied = eps;
          break;
        }
        eps *= static_cast<Scalar>(policy.growth);
      }
      if (llt.info() != Eigen::Success) {
        throw FactorizationError("diagonal block " + std::to_string(i) + " is not positive-definite after " +
                                     std::to_string(policy.max_retries) + " jitter retries",
                                 static_cast<long>(i));
      }
    }
    Matrix<Scalar> r = llt.matrixU();
    bc.logdet_sum += Scalar(2) * r.diagonal().array().log().sum();
    bc.u_vectors.push_back(r.transpose().template triangularView<Eigen::Lower>().solve(ones));
    bc.factors.push_back(std::move(r));
    bc.jitter.push_back(applied);
  }
  return bc;
}

/// R^{-1} D, block by block.
template <typename Scalar>
Matrix<Scalar> apply_r_inverse(const BlockCholesky<Scalar>& bc, const Matrix<Scalar>& d) {
  detail::check_rows<Scalar>(d.rows(), bc.n(), "apply_r_inverse");
  Matrix<Scalar> out(d.rows(), d.cols());
  for (Eigen::Index i = 0; i < bc.n_c; ++i) {
    out.middleRows(i * bc.b, bc.b) =
        bc.factors[static_cast<std::size_t>(i)].template triangularView<Eigen::Upper>().solve(
            d.middleRows(i * bc.b, bc.b));
  }
  return out;
}

/// R^{-T} D, block by block.
template <typename Scalar>
Matrix<Scalar> apply_r_inverse_transpose(const BlockCholesky<Scalar>& bc, const Matrix<Scalar>& d) {
  detail::check_rows<Scalar>(d.rows(), bc.n(), "apply_r_inverse_transpose");
  Matrix<Scalar> out(d.rows(), d.cols());
  for (Eigen::Index i = 0; i < bc.n_c; ++i) {
    out.middleRows(i * bc.b, bc.b) =
        bc.factors[static_cast<std::size_t>(i)].transpose().template triangularView<Eigen::Lower>().solve(
            d.middleRows(i * bc.b, bc.b));
  }
  return out;
}

/// How the block-diagonal term R^{-T} K_diag(theta') R^{-1} D is evaluated.
namespace shortcut {
struct Baseline {};
struct NoiseStep {
  double delta;
};
struct ScaleStep {
  double delta;
};
struct Generic {};
}  // namespace shortcut

using ShortcutKind = std::variant<shortcut::Baseline, shortcut::NoiseStep, shortcut::ScaleStep, shortcut::Generic>;

inline const char* shortcut_name(const ShortcutKind& s) {
  switch (s.index()) {
    case 0: return "baseline";
    case 1: return "noise-step";
    case 2: return "scale-step";
    default: return "generic";
  }
}

/// The split-preconditioned operator A = R^{-T} K''(theta') R^{-1}, with R
/// fixed at the baseline hyperparameters.
template <typename Scalar>
class PreconditionedOperator {
 public:
  // `generic_blocks` are the noisy diagonal blocks at theta'; required only
  // for the Generic shortcut.
  PreconditionedOperator(const BlockCholesky<Scalar>& bc, RepresentativeCoupling<Scalar> coupling,
                         ShortcutKind kind, const std::vector<Matrix<Scalar>>* generic_blocks = nullptr)
      : bc_(&bc), coupling_(std::move(coupling)), kind_(kind), generic_blocks_(generic_blocks) {
    validate();
    m_ = coupling_.coefficients();
  }

  [[nodiscard]] Eigen::Index rows() const { return bc_->n(); }
  [[nodiscard]] const ShortcutKind& kind() const { return kind_; }
  [[nodiscard]] const Hyperparameters<Scalar>& hyperparameters() const { return coupling_.hp; }

  [[nodiscard]] Matrix<Scalar> operator()(const Matrix<Scalar>& d) const { return apply(d); }

  [[nodiscard]] Matrix<Scalar> apply(const Matrix<Scalar>& d) const {
    const BlockCholesky<Scalar>& bc = *bc_;
    detail::check_rows<Scalar>(d.rows(), bc.n(), "apply_preconditioned");
    const Eigen::Index b = bc.b;
    Matrix<Scalar> out(d.rows(), d.cols());

    for (Eigen::Index i = 0; i < bc.n_c; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      const auto upper = bc.factors[idx].template triangularView<Eigen::Upper>();
      const auto lower = bc.factors[idx].transpose().template triangularView<Eigen::Lower>();
      const auto di = d.middleRows(i * b, b);
      auto oi = out.middleRows(i * b, b);
      if (std::holds_alternative<shortcut::Generic>(kind_)) {
        const Matrix<Scalar> y = upper.solve(di);
        const Matrix<Scalar> ky = (*generic_blocks_)[idx] * y;
        oi = lower.solve(ky);
        continue;
      }
      // Every other path is c1*D + c2*R^{-T}R^{-1}D on the block, using
      // K_diag = R^T R - jitter*I.
      const Scalar eps = bc.jitter[idx];
      Scalar c1 = 1;
      Scalar c2 = -eps;
      if (const auto* ns = std::get_if<shortcut::NoiseStep>(&kind_)) {
        c2 = static_cast<Scalar>(ns->delta) - eps;
      } else if (const auto* ss = std::get_if<shortcut::ScaleStep>(&kind_)) {
        const Scalar ratio = static_cast<Scalar>(ss->delta) / bc.hp.output_scale;
        c1 = Scalar(1) + ratio;
        c2 = -(c1 * eps + bc.hp.noise * ratio);
      }
      if (c2 == Scalar(0)) {
        oi = c1 * di;
      } else {
        const Matrix<Scalar> y = upper.solve(di);
        oi = c1 * di + c2 * lower.solve(y);
      }
    }

    // Off-diagonal part: block i gets u_i * sum_j M'_ij (u_j^T D_j).
    const Matrix<Scalar> t = m_ * detail::cluster_projections<Scalar>(d, bc.n_c, b, &bc.u_vectors);
    for (Eigen::Index i = 0; i < bc.n_c; ++i) {
      out.middleRows(i * b, b).noalias() += bc.u_vectors[static_cast<std::size_t>(i)] * t.row(i);
    }
    return out;
  }

 private:
  static bool close(Scalar a, Scalar b) {
    const Scalar tol = std::sqrt(std::numeric_limits<Scalar>::epsilon());
    return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
  }

  void validate() const {
    const auto& base = bc_->hp;
    const auto& hp = coupling_.hp;
    if (coupling_.n_c() != bc_->n_c) throw ShapeError("apply_preconditioned: cluster count mismatch");
    const auto mismatch = [&](const std::string& why) {
      throw UsageError(std::string("shortcut ") + shortcut_name(kind_) + " inconsistent with perturbed kernel: " + why);
    };
    if (std::holds_alternative<shortcut::Baseline>(kind_)) {
      if (!(close(hp.lengthscale, base.lengthscale) && close(hp.noise, base.noise) &&
            close(hp.output_scale, base.output_scale))) {
        mismatch("hyperparameters differ from the factorization baseline");
      }
    } else if (const auto* ns = std::get_if<shortcut::NoiseStep>(&kind_)) {
      if (!(close(hp.lengthscale, base.lengthscale) && close(hp.output_scale, base.output_scale) &&
            close(hp.noise, base.noise + static_cast<Scalar>(ns->delta)))) {
        mismatch("expected only the noise to move by the step");
      }
    } else if (const auto* ss = std::get_if<shortcut::ScaleStep>(&kind_)) {
      if (!(close(hp.lengthscale, base.lengthscale) && close(hp.noise, base.noise) &&
            close(hp.output_scale, base.output_scale + static_cast<Scalar>(ss->delta)))) {
        mismatch("expected only the output scale to move by the step");
      }
    } else {
      if (generic_blocks_ == nullptr || static_cast<Eigen::Index>(generic_blocks_->size()) != bc_->n_c) {
        mismatch("generic path needs the perturbed diagonal blocks");
      }
      for (const auto& blk : *generic_blocks_) {
        if (blk.rows() != bc_->b || blk.cols() != bc_->b) throw ShapeError("apply_preconditioned: block size mismatch");
      }
    }
  }

  const BlockCholesky<Scalar>* bc_;
  RepresentativeCoupling<Scalar> coupling_;
  ShortcutKind kind_;
  const std::vector<Matrix<Scalar>>* generic_blocks_;
  Matrix<Scalar> m_;
};

/// R^{-T} K''(theta') R^{-1} D where `perturbed` is the structured kernel at theta'.
template <typename Scalar>
Matrix<Scalar> apply_preconditioned(const BlockCholesky<Scalar>& bc, const StructuredKernel<Scalar>& perturbed,
                                    const Matrix<Scalar>& d, ShortcutKind kind) {
  PreconditionedOperator<Scalar> op(bc, perturbed.coupling, kind, &perturbed.diag_blocks);
  return op.apply(d);
}

}  // namespace blockgp
