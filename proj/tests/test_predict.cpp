#include "test_util.hpp"

#include "blockgp/oracle.hpp"

#include <gtest/gtest.h>

namespace blockgp::testing {
namespace {

ClusteredDataset<double> single_point(double x, double y) {
  ClusteredDataset<double> ds;
  ds.n_c = 1;
  ds.b = 1;
  ds.x_train = Mat::Constant(1, 1, x);
  ds.y_train = Vec::Constant(1, y);
  ds.reps = ds.x_train;
  ds.x_test.resize(0, 1);
  ds.y_test.resize(0);
  return ds;
}

PredictConfig tight() {
  PredictConfig cfg;
  cfg.cg = CgConfig{1e-12, 1000};
  return cfg;
}

TEST(Posterior, SinglePointClosedForm) {
  const auto ds = single_point(0.3, 2.0);
  const Hp hp(1.0, 0.5, 1.5);
  const auto res = posterior(ds, ds.x_train, hp, tight());
  EXPECT_NEAR(res.posterior.mean(0), 1.5 / 2.0 * 2.0, 1e-12);
  EXPECT_NEAR(res.posterior.variance(0), 1.5 * 0.5 / 2.0, 1e-12);
  const double sd = std::sqrt(res.posterior.variance(0));
  EXPECT_NEAR(res.posterior.upper(0) - res.posterior.lower(0), 4 * sd, 1e-12);
}

TEST(Posterior, ZeroLabelsGiveZeroMean) {
  auto ds = small_1d(3, 8, 1);
  ds.y_train.setZero();
  const auto res = posterior(ds, ds.x_test, Hp(1.0, 0.3, 1.0), tight());
  EXPECT_EQ(res.posterior.mean.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Posterior, MatchesDenseOracleOnStructuredCovariance) {
  const auto ds = small_1d(4, 16, 2);
  const Hp hp(0.8, 0.2, 1.2);
  const auto res = posterior(ds, ds.x_test, hp, tight());
  const auto ref = oracle::dense_posterior(ds, ds.x_test, hp, true);
  EXPECT_LT(rel_err(res.posterior.mean, ref.mean), 1e-3);
  EXPECT_LT((res.posterior.variance - ref.variance).cwiseAbs().maxCoeff(), 1e-3 * hp.output_scale);
}

TEST(Posterior, ChunkWidthDoesNotChangeResult) {
  const auto ds = small_1d(2, 16, 3);
  const Hp hp(1.0, 0.2, 1.0);
  PredictConfig narrow = tight();
  narrow.chunk = 3;
  const auto a = posterior(ds, ds.x_test, hp, tight());
  const auto b = posterior(ds, ds.x_test, hp, narrow);
  EXPECT_LT(rel_err(a.posterior.mean, b.posterior.mean), 1e-10);
  EXPECT_LT((a.posterior.variance - b.posterior.variance).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Posterior, MeanIsLinearInLabels) {
  auto ds = small_1d(3, 8, 4);
  const Hp hp(1.0, 0.3, 1.0);
  const Vec y = ds.y_train;
  const Vec mu1 = posterior(ds, ds.x_test, hp, tight()).posterior.mean;
  ds.y_train = 3.0 * y;
  const Vec mu3 = posterior(ds, ds.x_test, hp, tight()).posterior.mean;
  EXPECT_LT(rel_err(mu3, 3.0 * mu1), 1e-9);
}

TEST(Posterior, VarianceVanishesAtTrainingInputsWithTinyNoise) {
  // one cluster, so K'' is the exact covariance and interpolation holds
  const auto ds = small_1d(1, 4, 5);
  const Hp hp(1.0, 1e-6, 1.0);
  const auto res = posterior(ds, ds.x_train, hp, tight());
  EXPECT_LT(res.posterior.variance.maxCoeff(), 1e-4);
  EXPECT_GE(res.posterior.variance.minCoeff(), 0.0);
}

TEST(Posterior, RejectsDimensionMismatch) {
  const auto ds = small_1d(2, 4, 5);
  EXPECT_THROW(posterior(ds, Mat(Mat::Zero(3, 2)), Hp(1, 1, 1)), ShapeError);
}

TEST(Posterior, EmptyTestSet) {
  const auto ds = small_1d(2, 4, 5);
  const auto res = posterior(ds, Mat(0, 1), Hp(1, 1, 1));
  EXPECT_EQ(res.posterior.mean.size(), 0);
}

TEST(Rmse, KnownValues) {
  EXPECT_DOUBLE_EQ(rmse(Vec(Vec::Zero(4)), Vec(Vec::Zero(4))), 0.0);
  EXPECT_DOUBLE_EQ(rmse(Vec(Vec::Zero(4)), Vec(Vec::Constant(4, 3.0))), 3.0);
  Vec a(2), b(2);
  a << 1, 2;
  b << 4, 6;  // errors 3 and 4
  EXPECT_DOUBLE_EQ(rmse(a, b), std::sqrt(12.5));
}

TEST(Rmse, Errors) {
  EXPECT_THROW(rmse(Vec(0), Vec(0)), UsageError);
  EXPECT_THROW(rmse(Vec(Vec::Zero(2)), Vec(Vec::Zero(3))), ShapeError);
}

}  // namespace
}  // namespace blockgp::testing
