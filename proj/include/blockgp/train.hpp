#pragma once

// Negative marginal log likelihood on K'' and the derivative-free training
// loop: one block factorization per epoch, forward-difference gradients with
// step halving, and an Adam update.

#include "blockgp/dataset.hpp"
#include "blockgp/logdet.hpp"
#include "blockgp/pcg.hpp"
#include "blockgp/structured.hpp"
#include "blockgp/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace blockgp {

struct IterationStats {
  long solves = 0;
  long total = 0;
  int max = 0;

  void add(int iterations) {
    ++solves;
    total += iterations;
    max = std::max(max, iterations);
  }
  void merge(const IterationStats& o) {
    solves += o.solves;
    total += o.total;
    max = std::max(max, o.max);
  }
  [[nodiscard]] double mean() const { return solves == 0 ? 0.0 : static_cast<double>(total) / solves; }
};

struct TrainConfig {
  int epochs = 50;
  double learning_rate = 0.05;
  double grad_threshold = 1e-3;
  // Per-epoch initial steps as a fraction of each hyperparameter's current
  // value, unless explicit steps are given.
  double initial_step_fraction = 0.1;
  std::optional<std::array<double, 3>> initial_steps;
  CgConfig cg;
  int max_halvings = 20;
  std::uint64_t seed = 0;
  Eigen::Index probes = 8;
  JitterPolicy jitter;

  void validate() const {
    if (epochs < 0) throw UsageError("epochs must be non-negative");
    if (!(learning_rate > 0)) throw UsageError("learning rate must be positive");
    if (!(grad_threshold >= 1e-6 && grad_threshold <= 1e-2)) {
      throw UsageError("gradient threshold must lie in [1e-6, 1e-2]");
    }
    if (!(initial_step_fraction > 0)) throw UsageError("initial step fraction must be positive");
    if (initial_steps) {
      for (double s : *initial_steps) {
        if (!(s > 0)) throw UsageError("initial steps must be positive");
      }
    }
    if (!(cg.tol > 0) || cg.max_iter < 1) throw UsageError("CG tolerance and iteration cap must be positive");
    if (max_halvings < 1) throw UsageError("max_halvings must be at least 1");
    if (probes < 1) throw UsageError("probe count must be positive");
  }
};

struct LossEvaluation {
  double loss = 0;
  double data_fit = 0;  // y^T K''^{-1} y
  double logdet = 0;
  int solve_iterations = 0;
  int logdet_iterations = 0;
};

/// Loss at `hp` using the baseline factorization `bc`. `kind` must describe
/// how `hp` differs from `bc.hp`.
template <typename Scalar>
LossEvaluation compute_loss(const BlockCholesky<Scalar>& bc, const ClusteredDataset<Scalar>& data,
                            const Hyperparameters<Scalar>& hp, const ShortcutKind& kind,
                            const HutchinsonProbes<Scalar>& probes, const CgConfig& cfg) {
  if (data.n() != bc.n()) throw ShapeError("compute_loss: dataset and factorization sizes differ");
  std::optional<StructuredKernel<Scalar>> perturbed;
  RepresentativeCoupling<Scalar> coupling;
  if (std::holds_alternative<shortcut::Generic>(kind)) {
    perturbed = build_structured(data, hp);
    coupling = perturbed->coupling;
  } else {
    coupling = build_coupling(data.reps, hp);
  }
  const PreconditionedOperator<Scalar> op(bc, std::move(coupling), kind,
                                          perturbed ? &perturbed->diag_blocks : nullptr);

  const Matrix<Scalar> y = data.y_train;
  const Matrix<Scalar> rhs = apply_r_inverse_transpose(bc, y);
  CgResult<Scalar> solved = batch_cg<Scalar>(op, rhs, cfg.tol, cfg.max_iter);
  if (!solved.report.converged) {
    throw ConvergenceError("linear solve did not converge in " + std::to_string(solved.report.iterations) +
                           " iterations (residual " + std::to_string(solved.report.final_residual_norms[0]) + ")");
  }
  const Matrix<Scalar> u = apply_r_inverse(bc, solved.x);

  LossEvaluation ev;
  ev.solve_iterations = solved.report.iterations;
  ev.data_fit = static_cast<double>(data.y_train.dot(u.col(0)));
  const LogdetEstimate ld = estimate_logdet(bc, op, probes, cfg);
  ev.logdet = ld.value;
  ev.logdet_iterations = ld.solve.iterations;
  ev.loss = 0.5 * (ev.data_fit + ev.logdet + static_cast<double>(data.n()) * std::log(2.0 * std::numbers::pi));
  return ev;
}

struct GradientEstimate {
  double gradient = 0;
  int halvings = 0;
  int evaluations = 0;
  bool converged = false;  // false when max_halvings ran out
};

/// Forward-difference derivative with step halving until two consecutive
/// estimates differ by less than `threshold`. `loss_at(v)` evaluates the
/// loss with the hyperparameter set to `v`.
inline GradientEstimate numeric_grad(const std::function<double(double)>& loss_at, double loss0, double theta,
                                     double step, double threshold, int max_halvings) {
  if (!(step > 0) || !std::isfinite(step)) throw UsageError("numeric_grad: step must be positive");
  if (!(threshold > 0)) throw UsageError("numeric_grad: threshold must be positive");
  GradientEstimate est;
  double prev = (loss_at(theta + step) - loss0) / step;
  est.evaluations = 1;
  est.gradient = prev;
  while (est.halvings < max_halvings) {
    step *= 0.5;
    ++est.halvings;
    const double g = (loss_at(theta + step) - loss0) / step;
    ++est.evaluations;
    est.gradient = g;
    if (std::abs(g - prev) < threshold) {
      est.converged = true;
      return est;
    }
    prev = g;
  }
  return est;
}

template <typename Scalar>
struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;
  static constexpr double kFloor = 1e-8;

  std::array<double, 3> first_moment{};
  std::array<double, 3> second_moment{};
  long step_count = 0;
};

template <typename Scalar>
Hyperparameters<Scalar> adam_update(AdamState<Scalar>& state, const Hyperparameters<Scalar>& hp,
                                    const std::array<double, 3>& grads, double learning_rate) {
  using S = AdamState<Scalar>;
  ++state.step_count;
  const double c1 = 1.0 - std::pow(S::kBeta1, static_cast<double>(state.step_count));
  const double c2 = 1.0 - std::pow(S::kBeta2, static_cast<double>(state.step_count));
  Hyperparameters<Scalar> out = hp;
  for (int i = 0; i < 3; ++i) {
    const auto k = static_cast<std::size_t>(i);
    state.first_moment[k] = S::kBeta1 * state.first_moment[k] + (1.0 - S::kBeta1) * grads[k];
    state.second_moment[k] = S::kBeta2 * state.second_moment[k] + (1.0 - S::kBeta2) * grads[k] * grads[k];
    const double m_hat = state.first_moment[k] / c1;
    const double v_hat = state.second_moment[k] / c2;
    const double next = static_cast<double>(hp.get(i)) - learning_rate * m_hat / (std::sqrt(v_hat) + S::kEpsilon);
    out = out.with(i, static_cast<Scalar>(std::max(next, S::kFloor)));
  }
  return out;
}

template <typename Scalar>
struct EpochRecord {
  int epoch = 0;
  Hyperparameters<Scalar> hp;  // hyperparameters the epoch's loss was evaluated at
  double loss = 0;
  std::array<double, 3> grads{};
  std::array<int, 3> halvings{};
  std::array<bool, 3> grad_converged{};
  int pcg_max = 0;
  double pcg_mean = 0;
  int factorizations = 0;
  double jitter = 0;
};

template <typename Scalar>
struct TrainReport {
  std::vector<EpochRecord<Scalar>> epochs;
  Hyperparameters<Scalar> final_hp;
  IterationStats iterations;
  long factorizations = 0;
};

namespace detail {

inline std::string with_context(const std::string& what, int epoch, const char* where) {
  return "epoch " + std::to_string(epoch) + ", " + where + ": " + what;
}

}  // namespace detail

template <typename Scalar>
using EpochCallback = std::function<void(const EpochRecord<Scalar>&)>;

/// `on_epoch`, when set, sees each record as soon as its epoch finishes.
template <typename Scalar>
TrainReport<Scalar> train(const ClusteredDataset<Scalar>& data, const Hyperparameters<Scalar>& hp0,
                          const TrainConfig& cfg, const HutchinsonProbes<Scalar>& probes,
                          const EpochCallback<Scalar>& on_epoch = {}) {
  cfg.validate();
  data.validate();
  hp0.validate();
  if (probes.n() != data.n()) throw ShapeError("train: probe rows differ from training size");

  TrainReport<Scalar> report;
  AdamState<Scalar> adam;
  Hyperparameters<Scalar> hp = hp0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRecord<Scalar> rec;
    rec.epoch = epoch;
    rec.hp = hp;
    IterationStats epoch_stats;
    const auto tally = [&](const LossEvaluation& ev) {
      epoch_stats.add(ev.solve_iterations);
      epoch_stats.add(ev.logdet_iterations);
    };

    BlockCholesky<Scalar> bc;
    LossEvaluation base;
    try {
      bc = factorize_blocks(build_structured(data, hp), cfg.jitter);
      ++rec.factorizations;
      base = compute_loss(bc, data, hp, shortcut::Baseline{}, probes, cfg.cg);
    } catch (const FactorizationError& e) {
      throw FactorizationError(detail::with_context(e.what(), epoch, "baseline"), e.block_index);
    } catch (const ConvergenceError& e) {
      throw ConvergenceError(detail::with_context(e.what(), epoch, "baseline loss"));
    }
    tally(base);
    rec.loss = base.loss;
    rec.jitter = static_cast<double>(bc.total_jitter());

    for (int p = 0; p < 3; ++p) {
      const double theta = static_cast<double>(hp.get(p));
      const double step = cfg.initial_steps ? (*cfg.initial_steps)[static_cast<std::size_t>(p)]
                                            : cfg.initial_step_fraction * theta;
      const auto loss_at = [&](double value) {
        const Hyperparameters<Scalar> moved = hp.with(p, static_cast<Scalar>(value));
        const double delta = static_cast<double>(moved.get(p)) - static_cast<double>(hp.get(p));
        ShortcutKind kind = shortcut::Generic{};
        if (p == 1) kind = shortcut::NoiseStep{delta};
        if (p == 2) kind = shortcut::ScaleStep{delta};
        try {
          const LossEvaluation ev = compute_loss(bc, data, moved, kind, probes, cfg.cg);
          tally(ev);
          return ev.loss;
        } catch (const ConvergenceError& e) {
          throw ConvergenceError(detail::with_context(e.what(), epoch, kHyperparameterNames[p]));
        }
      };
      const GradientEstimate g = numeric_grad(loss_at, base.loss, theta, step, cfg.grad_threshold, cfg.max_halvings);
      rec.grads[static_cast<std::size_t>(p)] = g.gradient;
      rec.halvings[static_cast<std::size_t>(p)] = g.halvings;
      rec.grad_converged[static_cast<std::size_t>(p)] = g.converged;
    }

    hp = adam_update(adam, hp, rec.grads, cfg.learning_rate);
    rec.pcg_max = epoch_stats.max;
    rec.pcg_mean = epoch_stats.mean();
    report.iterations.merge(epoch_stats);
    report.factorizations += rec.factorizations;
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  report.final_hp = hp;
  return report;
}

template <typename Scalar>
TrainReport<Scalar> train(const ClusteredDataset<Scalar>& data, const Hyperparameters<Scalar>& hp0,
                          const TrainConfig& cfg) {
  return train(data, hp0, cfg, hutchinson_gen<Scalar>(data.n(), cfg.probes, cfg.seed));
}

}  // namespace blockgp
