#include "test_util.hpp"

#include <gtest/gtest.h>

#include <set>

namespace blockgp::testing {
namespace {

TEST(Targets, KnownValues) {
  EXPECT_NEAR(synth_1d_target(1.0), 0.9092974268256817, 1e-15);
  EXPECT_DOUBLE_EQ(synth_1d_target(0.0), 2.0);
  EXPECT_DOUBLE_EQ(synth_3d_target(Eigen::Vector3d(0, 0, 10)), 1.0);
  EXPECT_DOUBLE_EQ(synth_3d_target(Eigen::Vector3d(3, 4, 0)), 0.25);
}

TEST(Targets, TestSplitSize) {
  EXPECT_EQ(test_size_for(512), 128);
  EXPECT_EQ(test_size_for(400), 100);
  EXPECT_EQ(test_size_for(1), 1);
}

TEST(Gen1d, ShapesAndContainment) {
  Synth1dParams p;
  p.n_c = 5;
  p.b = 20;
  p.seed = 11;
  const auto ds = gen_1d<double>(p);
  EXPECT_NO_THROW(ds.validate());
  EXPECT_EQ(ds.x_train.rows(), 100);
  EXPECT_EQ(ds.x_test.rows(), 25);
  for (Eigen::Index i = 0; i < p.n_c; ++i) {
    EXPECT_NE(ds.reps(i, 0), 0.0);
    const Mat c = ds.cluster(i);
    EXPECT_LE((c.array() - ds.reps(i, 0)).abs().maxCoeff(), p.radius);
  }
  for (Eigen::Index i = 1; i < p.n_c; ++i) EXPECT_NEAR(ds.reps(i, 0) - ds.reps(i - 1, 0), p.spacing, 1e-12);
}

TEST(Gen1d, NoiselessLabelsFollowTarget) {
  Synth1dParams p;
  p.n_c = 2;
  p.b = 10;
  p.noise_sd = 0;
  const auto ds = gen_1d<double>(p);
  for (Eigen::Index k = 0; k < ds.n(); ++k) EXPECT_DOUBLE_EQ(ds.y_train(k), synth_1d_target(ds.x_train(k, 0)));
}

TEST(Gen1d, OverlapRejected) {
  Synth1dParams p;
  p.radius = 0.5;
  p.spacing = 1.0;
  EXPECT_THROW(gen_1d<double>(p), OverlapError);
}

TEST(Gen1d, Deterministic) {
  Synth1dParams p;
  p.seed = 99;
  const auto a = gen_1d<double>(p), b = gen_1d<double>(p);
  EXPECT_EQ(a.x_train, b.x_train);
  EXPECT_EQ(a.y_test, b.y_test);
  p.seed = 100;
  EXPECT_NE(gen_1d<double>(p).x_train, a.x_train);
}

TEST(Gen3d, ShapesContainmentAndDistinctVertices) {
  Synth3dParams p;
  p.n_c = 8;
  p.b = 16;
  p.seed = 3;
  const auto ds = gen_3d<double>(p);
  EXPECT_NO_THROW(ds.validate());
  EXPECT_EQ(ds.x_train.cols(), 3);
  EXPECT_EQ(ds.x_test.rows(), test_size_for(128));
  std::set<std::array<double, 3>> seen;
  for (Eigen::Index i = 0; i < p.n_c; ++i) {
    seen.insert({ds.reps(i, 0), ds.reps(i, 1), ds.reps(i, 2)});
    const Mat c = ds.cluster(i);
    for (Eigen::Index k = 0; k < p.b; ++k) EXPECT_LE((c.row(k) - ds.reps.row(i)).norm(), p.radius + 1e-12);
  }
  EXPECT_EQ(seen.size(), 8u);
  const Eigen::RowVectorXd lo = ds.x_train.colwise().minCoeff(), hi = ds.x_train.colwise().maxCoeff();
  for (Eigen::Index j = 0; j < ds.x_test.rows(); ++j) {
    EXPECT_TRUE((ds.x_test.row(j).array() >= lo.array()).all());
    EXPECT_TRUE((ds.x_test.row(j).array() <= hi.array()).all());
  }
}

TEST(Gen3d, OverlapRejected) {
  Synth3dParams p;
  p.side = 2.0;
  p.radius = 1.0;
  EXPECT_THROW(gen_3d<double>(p), OverlapError);
}

Mat blobs(Eigen::Index per_blob, const Mat& centres, double sd, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, sd);
  Mat x(per_blob * centres.rows(), centres.cols());
  for (Eigen::Index c = 0; c < centres.rows(); ++c) {
    for (Eigen::Index k = 0; k < per_blob; ++k) {
      for (Eigen::Index d = 0; d < centres.cols(); ++d) x(c * per_blob + k, d) = centres(c, d) + nd(rng);
    }
  }
  return x;
}

TEST(KMeans, RecoversSeparatedBlobs) {
  Mat centres(4, 2);
  centres << 0, 0, 10, 0, 0, 10, 10, 10;
  const Mat x = blobs(50, centres, 0.5, 1);
  const auto res = kmeans_uniform(x, 4, 40, 7);
  ASSERT_EQ(res.x.rows(), 160);
  // every kept point must come from the blob its cluster represents
  long agree = 0;
  for (Eigen::Index c = 0; c < 4; ++c) {
    const Eigen::Index blob = res.source_rows[static_cast<std::size_t>(c * 40)] / 50;
    for (Eigen::Index k = 0; k < 40; ++k) agree += res.source_rows[static_cast<std::size_t>(c * 40 + k)] / 50 == blob;
    EXPECT_LT((res.reps.row(c) - centres.row(blob)).norm(), 0.5);
  }
  EXPECT_GE(static_cast<double>(agree) / 160.0, 0.99);
}

TEST(KMeans, SingleClusterIsWholeSet) {
  std::mt19937_64 rng(2);
  const Mat x = random_matrix(30, 2, rng);
  const auto res = kmeans_uniform(x, 1, 30, 1);
  EXPECT_LT((res.reps.row(0) - x.colwise().mean()).norm(), 1e-12);
  std::vector<Eigen::Index> rows = res.source_rows;
  std::sort(rows.begin(), rows.end());
  for (Eigen::Index i = 0; i < 30; ++i) EXPECT_EQ(rows[static_cast<std::size_t>(i)], i);
}

TEST(KMeans, BalancedBlobsKeepEveryPoint) {
  Mat centres(3, 1);
  centres << -20, 0, 20;
  const Mat x = blobs(25, centres, 1.0, 3);
  const auto res = kmeans_uniform(x, 3, 25, 4);
  std::vector<Eigen::Index> rows = res.source_rows;
  std::sort(rows.begin(), rows.end());
  for (Eigen::Index i = 0; i < 75; ++i) EXPECT_EQ(rows[static_cast<std::size_t>(i)], i);
}

TEST(KMeans, InfeasibleSizes) {
  Mat centres(2, 1);
  centres << 0, 100;
  const Mat x = blobs(10, centres, 0.1, 5);
  EXPECT_THROW(kmeans_uniform(x, 2, 11, 1), InfeasibleClusterError);
  Mat skewed(12, 1);
  skewed << 0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 100, 100.1;
  EXPECT_THROW(kmeans_uniform(skewed, 2, 5, 1), InfeasibleClusterError);
}

TEST(KMeans, Deterministic) {
  std::mt19937_64 rng(8);
  const Mat x = random_matrix(60, 2, rng);
  const auto a = kmeans_uniform(x, 3, 15, 21), b = kmeans_uniform(x, 3, 15, 21);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.reps, b.reps);
}

TEST(InitialHyperparameters, RangesAndDeterminism) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Hp hp = draw_initial_hyperparameters(seed);
    EXPECT_GE(hp.lengthscale, 0.5);
    EXPECT_LT(hp.lengthscale, 1.5);
    EXPECT_GE(hp.noise, 0.1);
    EXPECT_LT(hp.noise, 0.5);
    EXPECT_GE(hp.output_scale, 0.5);
    EXPECT_LT(hp.output_scale, 1.5);
    EXPECT_EQ(hp, draw_initial_hyperparameters(seed));
  }
  EXPECT_NE(draw_initial_hyperparameters(1), draw_initial_hyperparameters(2));
}

TEST(Representatives, MedoidAndCentroid) {
  Mat x(3, 1);
  x << -1, 0, 1;
  EXPECT_DOUBLE_EQ(select_representatives(x, 1, 3, Hp(1, 1, 1), RepresentativeMode::kMedoid)(0, 0), 0.0);
  Mat y(2, 1);
  y << 0, 2;
  EXPECT_DOUBLE_EQ(select_representatives(y, 1, 2, Hp(1, 1, 1), RepresentativeMode::kCentroid)(0, 0), 1.0);
  EXPECT_THROW(select_representatives(y, 2, 2, Hp(1, 1, 1), RepresentativeMode::kCentroid), ShapeError);
}

}  // namespace
}  // namespace blockgp::testing
