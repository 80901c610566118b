#pragma once

// Exact dense reference computations. Used by tests and the compare-oracle
// command only; refuses problems larger than kOracleMaxN.

#include "blockgp/dataset.hpp"
#include "blockgp/kernel.hpp"
#include "blockgp/predict.hpp"
#include "blockgp/structured.hpp"
#include "blockgp/train.hpp"
#include "blockgp/types.hpp"

#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>
#include <functional>
#include <numbers>

namespace blockgp::oracle {

inline constexpr Eigen::Index kOracleMaxN = 4096;

inline void guard(Eigen::Index n) {
  if (n > kOracleMaxN) {
    throw UsageError("oracle: refusing dense computation with n = " + std::to_string(n) + " > " +
                     std::to_string(kOracleMaxN));
  }
}

/// Brute-force dense assembly of K'' from its compressed storage.
template <typename Scalar>
Matrix<Scalar> densify(const StructuredKernel<Scalar>& sk) {
  guard(sk.n());
  const Eigen::Index b = sk.b;
  Matrix<Scalar> k(sk.n(), sk.n());
  for (Eigen::Index i = 0; i < sk.n_c; ++i) {
    for (Eigen::Index j = 0; j < sk.n_c; ++j) {
      if (i == j) {
        k.block(i * b, i * b, b, b) =
            sk.diag_blocks[static_cast<std::size_t>(i)].array() + sk.coupling.compensation(i);
      } else {
        k.block(i * b, j * b, b, b).setConstant(sk.coupling.k_rep(i, j));
      }
    }
  }
  return k;
}

/// Unapproximated noisy covariance of the training inputs.
template <typename Scalar>
Matrix<Scalar> exact_covariance(const ClusteredDataset<Scalar>& data, const Hyperparameters<Scalar>& hp) {
  guard(data.n());
  return covar_dense(data.x_train, data.x_train, hp, true);
}

/// Dense matrix of a linear operator, by applying it to the identity.
template <typename Scalar, typename Op>
Matrix<Scalar> densify_operator(const Op& op, Eigen::Index n) {
  guard(n);
  return op(Matrix<Scalar>::Identity(n, n));
}

template <typename Scalar>
struct DenseModel {
  Matrix<Scalar> k;
  Eigen::LLT<Matrix<Scalar>> llt;
  double logdet = 0;
};

template <typename Scalar>
DenseModel<Scalar> dense_model(const Matrix<Scalar>& k) {
  guard(k.rows());
  DenseModel<Scalar> m;
  m.k = k;
  m.llt.compute(k);
  if (m.llt.info() != Eigen::Success) throw FactorizationError("oracle: dense matrix is not positive-definite", -1);
  m.logdet = 2.0 * static_cast<double>(m.llt.matrixL().toDenseMatrix().diagonal().array().log().sum());
  return m;
}

template <typename Scalar>
double logdet_eig(const Matrix<Scalar>& k) {
  guard(k.rows());
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(k, Eigen::EigenvaluesOnly);
  return static_cast<double>(es.eigenvalues().array().log().sum());
}

template <typename Scalar>
double exact_loss(const Matrix<Scalar>& k, const Vector<Scalar>& y) {
  if (k.rows() != y.size()) throw ShapeError("exact_loss: size mismatch");
  const DenseModel<Scalar> m = dense_model(k);
  const double fit = static_cast<double>(y.dot(m.llt.solve(y)));
  return 0.5 * (fit + m.logdet + static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi));
}

template <typename Scalar>
Posterior<Scalar> exact_posterior(const Matrix<Scalar>& k, const Matrix<Scalar>& k_star, const Vector<Scalar>& kss_diag,
                                  const Vector<Scalar>& y) {
  if (k_star.rows() != k.rows() || kss_diag.size() != k_star.cols() || y.size() != k.rows()) {
    throw ShapeError("exact_posterior: inconsistent shapes");
  }
  const DenseModel<Scalar> m = dense_model(k);
  Posterior<Scalar> post;
  post.mean = k_star.transpose() * m.llt.solve(y);
  const Matrix<Scalar> v = m.llt.matrixL().solve(k_star);
  post.variance = kss_diag - v.colwise().squaredNorm().transpose();
  for (Eigen::Index j = 0; j < post.variance.size(); ++j) {
    if (post.variance(j) < 0) {
      post.variance(j) = 0;
      ++post.clamped;
    }
  }
  const Vector<Scalar> sd = post.variance.array().sqrt();
  post.lower = post.mean - Scalar(2) * sd;
  post.upper = post.mean + Scalar(2) * sd;
  return post;
}

/// Dense posterior at `x_test`, against either the densified K'' or the
/// exact covariance.
template <typename Scalar>
Posterior<Scalar> dense_posterior(const ClusteredDataset<Scalar>& data, const Matrix<Scalar>& x_test,
                                  const Hyperparameters<Scalar>& hp, bool structured) {
  const Matrix<Scalar> k = structured ? densify(build_structured(data, hp)) : exact_covariance(data, hp);
  const Matrix<Scalar> k_star = covar_dense(data.x_train, x_test, hp, false);
  const Vector<Scalar> kss = Vector<Scalar>::Constant(x_test.rows(), hp.output_scale);
  return exact_posterior(k, k_star, kss, data.y_train);
}

/// Central differences of `loss` in each hyperparameter.
template <typename Scalar>
std::array<double, 3> fd_gradient(const std::function<double(const Hyperparameters<Scalar>&)>& loss,
                                  const Hyperparameters<Scalar>& hp, double step) {
  std::array<double, 3> g{};
  for (int i = 0; i < 3; ++i) {
    const double v = static_cast<double>(hp.get(i));
    if (!(v - step > 0)) throw UsageError("fd_gradient: step would make a hyperparameter non-positive");
    const double up = loss(hp.with(i, static_cast<Scalar>(v + step)));
    const double down = loss(hp.with(i, static_cast<Scalar>(v - step)));
    g[static_cast<std::size_t>(i)] = (up - down) / (2.0 * step);
  }
  return g;
}

/// Exact-GPR training: dense loss on the unapproximated covariance, the same
/// halving forward differences and Adam updates as the structured trainer.
template <typename Scalar>
TrainReport<Scalar> train_exact(const ClusteredDataset<Scalar>& data, const Hyperparameters<Scalar>& hp0,
                                const TrainConfig& cfg) {
  cfg.validate();
  guard(data.n());
  TrainReport<Scalar> report;
  AdamState<Scalar> adam;
  Hyperparameters<Scalar> hp = hp0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRecord<Scalar> rec;
    rec.epoch = epoch;
    rec.hp = hp;
    rec.loss = exact_loss(exact_covariance(data, hp), data.y_train);
    for (int p = 0; p < 3; ++p) {
      const double theta = static_cast<double>(hp.get(p));
      const double step = cfg.initial_steps ? (*cfg.initial_steps)[static_cast<std::size_t>(p)]
                                            : cfg.initial_step_fraction * theta;
      const auto loss_at = [&](double value) {
        return exact_loss(exact_covariance(data, hp.with(p, static_cast<Scalar>(value))), data.y_train);
      };
      const GradientEstimate g = numeric_grad(loss_at, rec.loss, theta, step, cfg.grad_threshold, cfg.max_halvings);
      rec.grads[static_cast<std::size_t>(p)] = g.gradient;
      rec.halvings[static_cast<std::size_t>(p)] = g.halvings;
      rec.grad_converged[static_cast<std::size_t>(p)] = g.converged;
    }
    hp = adam_update(adam, hp, rec.grads, cfg.learning_rate);
    report.epochs.push_back(rec);
  }
  report.final_hp = hp;
  return report;
}

}  // namespace blockgp::oracle
