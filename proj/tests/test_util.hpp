#pragma once

#include "blockgp/blockgp.hpp"

#include <cstdint>
#include <random>

namespace blockgp::testing {

using Mat = Matrix<double>;
using Vec = Vector<double>;
using Hp = Hyperparameters<double>;

// Small clustered 1-D instance with well separated clusters.
inline ClusteredDataset<double> small_1d(Eigen::Index n_c, Eigen::Index b, std::uint64_t seed) {
  Synth1dParams p;
  p.n_c = n_c;
  p.b = b;
  p.seed = seed;
  return gen_1d<double>(p);
}

inline Hp random_hp(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> l(0.5, 2.0), s(0.05, 1.0), a(0.5, 2.0);
  return Hp(l(rng), s(rng), a(rng));
}

inline Mat random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Mat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
  }
  return m;
}

inline double rel_err(const Mat& a, const Mat& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

// Entry-by-entry assembly of K'' straight from the kernel definition.
inline Mat brute_force_structured(const ClusteredDataset<double>& ds, const Hp& hp) {
  const Eigen::Index n = ds.n();
  Mat k_rep(ds.n_c, ds.n_c);
  for (Eigen::Index i = 0; i < ds.n_c; ++i) {
    for (Eigen::Index j = 0; j < ds.n_c; ++j) k_rep(i, j) = kernel_eval(ds.reps.row(i), ds.reps.row(j), hp);
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(k_rep);
  const double lambda0 = es.eigenvalues()(0);
  Mat k(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) {
      const Eigen::Index ci = r / ds.b, cj = c / ds.b;
      if (ci == cj) {
        k(r, c) = kernel_eval(ds.x_train.row(r), ds.x_train.row(c), hp) + (r == c ? hp.noise : 0.0) +
                  (k_rep(ci, ci) - lambda0);
      } else {
        k(r, c) = k_rep(ci, cj);
      }
    }
  }
  return k;
}

}  // namespace blockgp::testing
