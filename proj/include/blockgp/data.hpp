#pragma once

// Synthetic clustered datasets, k-means with uniform cluster trimming, and
// representative selection.

#include "blockgp/dataset.hpp"
#include "blockgp/kernel.hpp"
#include "blockgp/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace blockgp {

inline constexpr double kDefaultLabelNoiseSd = 0.4;  // variance 0.16
inline constexpr double kTestFraction = 0.2;

inline double synth_1d_target(double x) { return x == 0.0 ? 2.0 : std::sin(2.0 * x) / x; }

template <typename Derived>
double synth_3d_target(const Eigen::MatrixBase<Derived>& x) {
  return static_cast<double>(x.squaredNorm()) / 100.0;
}

// Test-set size giving an 80/20 train/test split.
inline Eigen::Index test_size_for(Eigen::Index n_train) {
  return std::max<Eigen::Index>(
      1, static_cast<Eigen::Index>(std::llround(static_cast<double>(n_train) * kTestFraction / (1.0 - kTestFraction))));
}

/// Starting hyperparameters drawn from `seed`: lengthscale and output scale
/// uniform in [0.5, 1.5], noise variance uniform in [0.1, 0.5].
inline Hyperparameters<double> draw_initial_hyperparameters(std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> l(0.5, 1.5), s(0.1, 0.5), a(0.5, 1.5);
  const double lengthscale = l(rng), noise = s(rng), scale = a(rng);
  return Hyperparameters<double>(lengthscale, noise, scale);
}

struct Synth1dParams {
  Eigen::Index n_c = 8;
  Eigen::Index b = 64;
  double radius = 0.4;
  double spacing = 1.0;
  double noise_sd = kDefaultLabelNoiseSd;
  std::uint64_t seed = 0;
};

/// Clusters of b points drawn uniformly within `radius` of n_c equally spaced
/// representatives (none at the origin); labels sin(2x)/x plus Gaussian noise.
template <typename Scalar>
ClusteredDataset<Scalar> gen_1d(const Synth1dParams& p) {
  if (p.n_c < 1 || p.b < 1) throw UsageError("gen_1d: n_c and b must be positive");
  if (!(p.radius > 0) || !(p.noise_sd >= 0)) throw UsageError("gen_1d: radius must be positive, noise_sd >= 0");
  if (!(p.spacing > 2.0 * p.radius)) {
    throw OverlapError("gen_1d: spacing " + std::to_string(p.spacing) + " must exceed twice the radius " +
                       std::to_string(p.radius));
  }
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  ClusteredDataset<Scalar> ds;
  ds.n_c = p.n_c;
  ds.b = p.b;
  ds.reps.resize(p.n_c, 1);
  const double centre = 0.5 * static_cast<double>(p.n_c - 1);
  const double shift = (p.n_c % 2 == 1) ? 0.5 * p.spacing : 0.0;
  for (Eigen::Index i = 0; i < p.n_c; ++i) {
    ds.reps(i, 0) = static_cast<Scalar>((static_cast<double>(i) - centre) * p.spacing + shift);
  }

  const Eigen::Index n = p.n_c * p.b;
  ds.x_train.resize(n, 1);
  ds.y_train.resize(n);
  for (Eigen::Index i = 0; i < p.n_c; ++i) {
    for (Eigen::Index k = 0; k < p.b; ++k) {
      const double x = static_cast<double>(ds.reps(i, 0)) + p.radius * unit(rng);
      ds.x_train(i * p.b + k, 0) = static_cast<Scalar>(x);
      ds.y_train(i * p.b + k) = static_cast<Scalar>(synth_1d_target(x) + p.noise_sd * noise(rng));
    }
  }

  const double lo = static_cast<double>(ds.x_train.minCoeff());
  const double hi = static_cast<double>(ds.x_train.maxCoeff());
  const double margin = 0.1 * p.spacing;
  std::uniform_real_distribution<double> test_x(lo - margin, hi + margin);
  const Eigen::Index n_test = test_size_for(n);
  ds.x_test.resize(n_test, 1);
  ds.y_test.resize(n_test);
  for (Eigen::Index j = 0; j < n_test; ++j) {
    const double x = test_x(rng);
    ds.x_test(j, 0) = static_cast<Scalar>(x);
    ds.y_test(j) = static_cast<Scalar>(synth_1d_target(x) + p.noise_sd * noise(rng));
  }
  return ds;
}

struct Synth3dParams {
  Eigen::Index n_c = 8;
  Eigen::Index b = 64;
  double side = 4.0;
  double radius = 1.5;
  double noise_sd = kDefaultLabelNoiseSd;
  std::uint64_t seed = 0;
};

/// Clusters sampled in balls around distinct vertices of a cubic lattice of
/// the given side length; labels ||x||^2 / 100 plus Gaussian noise. Test
/// inputs are uniform in the training bounding box.
template <typename Scalar>
ClusteredDataset<Scalar> gen_3d(const Synth3dParams& p) {
  if (p.n_c < 1 || p.b < 1) throw UsageError("gen_3d: n_c and b must be positive");
  if (!(p.side > 0) || !(p.radius > 0) || !(p.noise_sd >= 0)) {
    throw UsageError("gen_3d: side and radius must be positive, noise_sd >= 0");
  }
  if (!(p.radius < 0.5 * p.side)) {
    throw OverlapError("gen_3d: radius " + std::to_string(p.radius) + " must be below half the side length " +
                       std::to_string(p.side));
  }
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> unit01(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  Eigen::Index per_axis = 1;
  while (per_axis * per_axis * per_axis < p.n_c) ++per_axis;
  const double centre = 0.5 * static_cast<double>(per_axis - 1) * p.side;

  ClusteredDataset<Scalar> ds;
  ds.n_c = p.n_c;
  ds.b = p.b;
  ds.reps.resize(p.n_c, 3);
  for (Eigen::Index i = 0; i < p.n_c; ++i) {
    const Eigen::Index ix = i / (per_axis * per_axis);
    const Eigen::Index iy = (i / per_axis) % per_axis;
    const Eigen::Index iz = i % per_axis;
    ds.reps(i, 0) = static_cast<Scalar>(static_cast<double>(ix) * p.side - centre);
    ds.reps(i, 1) = static_cast<Scalar>(static_cast<double>(iy) * p.side - centre);
    ds.reps(i, 2) = static_cast<Scalar>(static_cast<double>(iz) * p.side - centre);
  }

  const Eigen::Index n = p.n_c * p.b;
  ds.x_train.resize(n, 3);
  ds.y_train.resize(n);
  for (Eigen::Index i = 0; i < p.n_c; ++i) {
    for (Eigen::Index k = 0; k < p.b; ++k) {
      Eigen::Vector3d dir(normal(rng), normal(rng), normal(rng));
      const double len = dir.norm();
      if (len > 0) dir /= len;
      const double r = p.radius * std::cbrt(unit01(rng));
      const Eigen::Vector3d x = ds.reps.row(i).template cast<double>().transpose() + r * dir;
      ds.x_train.row(i * p.b + k) = x.transpose().template cast<Scalar>();
      ds.y_train(i * p.b + k) = static_cast<Scalar>(synth_3d_target(x) + p.noise_sd * normal(rng));
    }
  }

  const Eigen::RowVector3d lo = ds.x_train.colwise().minCoeff().template cast<double>();
  const Eigen::RowVector3d hi = ds.x_train.colwise().maxCoeff().template cast<double>();
  const Eigen::Index n_test = test_size_for(n);
  ds.x_test.resize(n_test, 3);
  ds.y_test.resize(n_test);
  for (Eigen::Index j = 0; j < n_test; ++j) {
    Eigen::Vector3d x;
    for (int c = 0; c < 3; ++c) x(c) = lo(c) + (hi(c) - lo(c)) * unit01(rng);
    ds.x_test.row(j) = x.transpose().template cast<Scalar>();
    ds.y_test(j) = static_cast<Scalar>(synth_3d_target(x) + p.noise_sd * normal(rng));
  }
  return ds;
}

template <typename Scalar>
struct KMeansResult {
  Matrix<Scalar> x;                       // b*n_c x d, cluster-contiguous
  Matrix<Scalar> reps;                    // centroids of the kept members
  std::vector<Eigen::Index> source_rows;  // row of the input each kept point came from
  std::vector<Eigen::Index> assignment;   // Lloyd label of every input row
  int iterations = 0;
  Eigen::Index n_c = 0;
  Eigen::Index b = 0;
};

struct KMeansOptions {
  int max_iter = 100;
  double shift_tol = 1e-6;
};

/// Lloyd k-means with k-means++ seeding, then each cluster trimmed to the b
/// members nearest its centroid.
template <typename Scalar>
KMeansResult<Scalar> kmeans_uniform(const Matrix<Scalar>& x, Eigen::Index n_c, Eigen::Index b, std::uint64_t seed,
                                    const KMeansOptions& opts = {}) {
  const Eigen::Index n = x.rows();
  if (n_c < 1 || b < 1) throw UsageError("kmeans_uniform: n_c and b must be positive");
  if (n < b * n_c) {
    throw InfeasibleClusterError("kmeans_uniform: " + std::to_string(n) + " points cannot fill " +
                                 std::to_string(n_c) + " clusters of " + std::to_string(b));
  }
  std::mt19937_64 rng(seed);
  const auto sq_dist = [&](Eigen::Index row, const RowVector<Scalar>& c) {
    return static_cast<double>((x.row(row) - c).squaredNorm());
  };

  Matrix<Scalar> centroids(n_c, x.cols());
  {
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    centroids.row(0) = x.row(pick(rng));
    std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    for (Eigen::Index c = 1; c < n_c; ++c) {
      double total = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        auto& di = d2[static_cast<std::size_t>(i)];
        di = std::min(di, sq_dist(i, centroids.row(c - 1)));
        total += di;
      }
      Eigen::Index chosen = n - 1;
      if (total > 0) {
        double target = std::uniform_real_distribution<double>(0.0, total)(rng);
        for (Eigen::Index i = 0; i < n; ++i) {
          target -= d2[static_cast<std::size_t>(i)];
          if (target <= 0) {
            chosen = i;
            break;
          }
        }
      } else {
        chosen = pick(rng);
      }
      centroids.row(c) = x.row(chosen);
    }
  }

  KMeansResult<Scalar> res;
  res.n_c = n_c;
  res.b = b;
  res.assignment.assign(static_cast<std::size_t>(n), 0);
  std::vector<double> best(static_cast<std::size_t>(n));
  for (int it = 0; it < opts.max_iter; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double bd = std::numeric_limits<double>::infinity();
      Eigen::Index bc = 0;
      for (Eigen::Index c = 0; c < n_c; ++c) {
        const double d = sq_dist(i, centroids.row(c));
        if (d < bd) {
          bd = d;
          bc = c;
        }
      }
      res.assignment[static_cast<std::size_t>(i)] = bc;
      best[static_cast<std::size_t>(i)] = bd;
    }
    Matrix<Scalar> next = Matrix<Scalar>::Zero(n_c, x.cols());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(n_c), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index c = res.assignment[static_cast<std::size_t>(i)];
      next.row(c) += x.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    for (Eigen::Index c = 0; c < n_c; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        next.row(c) /= static_cast<Scalar>(counts[static_cast<std::size_t>(c)]);
      } else {
        // re-seed an empty cluster at the point farthest from its centroid
        const auto far = std::max_element(best.begin(), best.end()) - best.begin();
        next.row(c) = x.row(far);
        best[static_cast<std::size_t>(far)] = 0;
      }
    }
    const double shift = std::sqrt(static_cast<double>((next - centroids).rowwise().squaredNorm().maxCoeff()));
    centroids = next;
    res.iterations = it + 1;
    if (shift <= opts.shift_tol) break;
  }
  // final assignment against the converged centroids
  for (Eigen::Index i = 0; i < n; ++i) {
    double bd = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < n_c; ++c) {
      const double d = sq_dist(i, centroids.row(c));
      if (d < bd) {
        bd = d;
        res.assignment[static_cast<std::size_t>(i)] = c;
      }
    }
  }

  res.x.resize(b * n_c, x.cols());
  res.reps.resize(n_c, x.cols());
  for (Eigen::Index c = 0; c < n_c; ++c) {
    std::vector<Eigen::Index> members;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (res.assignment[static_cast<std::size_t>(i)] == c) members.push_back(i);
    }
    if (static_cast<Eigen::Index>(members.size()) < b) {
      throw InfeasibleClusterError("kmeans_uniform: cluster " + std::to_string(c) + " has only " +
                                   std::to_string(members.size()) + " members; use b <= " +
                                   std::to_string(members.size()));
    }
    std::stable_sort(members.begin(), members.end(), [&](Eigen::Index l, Eigen::Index r) {
      return sq_dist(l, centroids.row(c)) < sq_dist(r, centroids.row(c));
    });
    members.resize(static_cast<std::size_t>(b));
    std::sort(members.begin(), members.end());
    for (Eigen::Index k = 0; k < b; ++k) {
      const Eigen::Index src = members[static_cast<std::size_t>(k)];
      res.x.row(c * b + k) = x.row(src);
      res.source_rows.push_back(src);
    }
    res.reps.row(c) = res.x.middleRows(c * b, b).colwise().mean();
  }
  return res;
}

enum class RepresentativeMode { kCentroid, kMedoid };

/// One representative per cluster of the cluster-contiguous `x`.
/// Medoid picks the member with the largest summed kernel similarity.
template <typename Scalar>
Matrix<Scalar> select_representatives(const Matrix<Scalar>& x, Eigen::Index n_c, Eigen::Index b,
                                      const Hyperparameters<Scalar>& hp, RepresentativeMode mode) {
  if (n_c < 1 || b < 1 || x.rows() != n_c * b) throw ShapeError("select_representatives: x must hold n_c*b rows");
  Matrix<Scalar> reps(n_c, x.cols());
  for (Eigen::Index c = 0; c < n_c; ++c) {
    const Matrix<Scalar> members = x.middleRows(c * b, b);
    if (mode == RepresentativeMode::kCentroid) {
      reps.row(c) = members.colwise().mean();
      continue;
    }
    const Matrix<Scalar> k = covar_dense(members, members, hp, false);
    Eigen::Index best = 0;
    k.colwise().sum().maxCoeff(&best);
    reps.row(c) = members.row(best);
  }
  return reps;
}

}  // namespace blockgp
