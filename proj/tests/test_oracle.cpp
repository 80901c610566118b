#include "test_util.hpp"

#include "blockgp/oracle.hpp"

#include <gtest/gtest.h>

namespace blockgp::testing {
namespace {

TEST(ExactLoss, IdentityAndScaledIdentity) {
  const Vec y = (Vec(4) << 1, -2, 0.5, 3).finished();
  const double log2pi = std::log(2 * std::numbers::pi);
  EXPECT_NEAR(oracle::exact_loss<double>(Mat::Identity(4, 4), y), 0.5 * (y.squaredNorm() + 4 * log2pi), 1e-12);
  EXPECT_NEAR(oracle::exact_loss<double>(2 * Mat::Identity(4, 4), Vec::Zero(4)), 5.0620484939385815, 1e-12);
}

TEST(ExactLoss, ShapeAndDefiniteness) {
  EXPECT_THROW(oracle::exact_loss<double>(Mat::Identity(3, 3), Vec::Zero(4)), ShapeError);
  EXPECT_THROW(oracle::exact_loss<double>(-Mat::Identity(2, 2), Vec::Zero(2)), FactorizationError);
}

TEST(Logdet, CholeskyAgreesWithEigenvalues) {
  std::mt19937_64 rng(4);
  const Mat a = random_matrix(40, 40, rng);
  const Mat k = a * a.transpose() + Mat::Identity(40, 40);
  EXPECT_NEAR(oracle::dense_model(k).logdet, oracle::logdet_eig(k), 1e-8);
}

TEST(Densify, MatchesBruteForce) {
  const auto ds = small_1d(3, 5, 1);
  const Hp hp(0.7, 0.2, 1.1);
  EXPECT_LT((oracle::densify(build_structured(ds, hp)) - brute_force_structured(ds, hp)).cwiseAbs().maxCoeff(),
            1e-13);
}

TEST(FdGradient, QuadraticAndConstant) {
  const std::function<double(const Hp&)> quad = [](const Hp& h) {
    return h.lengthscale * h.lengthscale + 3 * h.noise + 0 * h.output_scale;
  };
  const auto g = oracle::fd_gradient(quad, Hp(2, 1, 1), 1e-3);
  EXPECT_NEAR(g[0], 4.0, 1e-9);
  EXPECT_NEAR(g[1], 3.0, 1e-9);
  EXPECT_NEAR(g[2], 0.0, 1e-12);
  const std::function<double(const Hp&)> flat = [](const Hp&) { return 7.0; };
  EXPECT_EQ(oracle::fd_gradient(flat, Hp(1, 1, 1), 1e-2), (std::array<double, 3>{}));
  EXPECT_THROW(oracle::fd_gradient(flat, Hp(1, 1e-3, 1), 1e-2), UsageError);
}

TEST(Guard, RefusesLargeProblems) {
  EXPECT_THROW(oracle::guard(oracle::kOracleMaxN + 1), UsageError);
  EXPECT_NO_THROW(oracle::guard(oracle::kOracleMaxN));
}

TEST(ExactPosterior, ReducesToStructuredWhenClustersAreTight) {
  // A single cluster: the structured covariance is the exact one.
  const auto ds = small_1d(1, 12, 6);
  const Hp hp(1.0, 0.1, 1.0);
  const auto a = oracle::dense_posterior(ds, ds.x_test, hp, true);
  const auto b = oracle::dense_posterior(ds, ds.x_test, hp, false);
  EXPECT_LT(rel_err(a.mean, b.mean), 1e-10);
}

TEST(TrainExact, DecreasesLoss) {
  const auto ds = small_1d(2, 16, 3);
  TrainConfig cfg;
  cfg.epochs = 10;
  const auto rep = oracle::train_exact(ds, Hp(1.5, 1.0, 0.5), cfg);
  ASSERT_EQ(rep.epochs.size(), 10u);
  EXPECT_LT(rep.epochs.back().loss, rep.epochs.front().loss);
}

}  // namespace
}  // namespace blockgp::testing
