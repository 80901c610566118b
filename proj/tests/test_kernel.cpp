#include "test_util.hpp"

#include <gtest/gtest.h>

namespace blockgp::testing {
namespace {

TEST(Kernel, ZeroDistanceGivesOutputScale) {
  Vec x(3);
  x << 0.3, -1.2, 4.0;
  EXPECT_DOUBLE_EQ(kernel_eval(x, x, Hp(0.7, 0.1, 3.0)), 3.0);
}

TEST(Kernel, NonSquaredDistanceInExponent) {
  Vec a(1), b(1);
  a << 0.0;
  b << 2.0;
  EXPECT_NEAR(kernel_eval(a, b, Hp(1.0, 0.1, 1.0)), 0.36787944117144233, 1e-15);
  Vec c(2), d(2);
  c << 0.0, 0.0;
  d << 0.6, 0.8;  // distance 1
  EXPECT_NEAR(kernel_eval(c, d, Hp(0.5, 0.1, 2.0)), 0.2706705664732254, 1e-15);
}

TEST(Kernel, DimensionMismatchThrows) {
  Vec a(2), b(3);
  a.setZero();
  b.setZero();
  EXPECT_THROW(kernel_eval(a, b, Hp(1, 1, 1)), ShapeError);
}

TEST(Kernel, Symmetric) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 50; ++t) {
    const Mat p = random_matrix(2, 4, rng);
    const Hp hp = random_hp(rng);
    EXPECT_EQ(kernel_eval(p.row(0), p.row(1), hp), kernel_eval(p.row(1), p.row(0), hp));
  }
}

TEST(Hyperparameters, RejectNonPositive) {
  EXPECT_THROW(Hp(0.0, 1.0, 1.0), UsageError);
  EXPECT_THROW(Hp(1.0, -1.0, 1.0), UsageError);
  EXPECT_THROW(static_cast<void>(Hp(1.0, 1.0, 1.0).with(2, 0.0)), UsageError);
}

TEST(CovarDense, SinglePointWithNoise) {
  Mat a(1, 2);
  a << 1.0, 2.0;
  const Mat k = covar_dense(a, a, Hp(1.0, 0.1, 1.0), true);
  ASSERT_EQ(k.rows(), 1);
  EXPECT_NEAR(k(0, 0), 1.1, 1e-15);
}

TEST(CovarDense, TwoPointsOneD) {
  Mat a(2, 1);
  a << 0.0, 2.0;
  const Mat k = covar_dense(a, a, Hp(1.0, 0.1, 1.0), false);
  EXPECT_DOUBLE_EQ(k(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(k(1, 1), 1.0);
  EXPECT_NEAR(k(0, 1), std::exp(-1.0), 1e-15);
  EXPECT_EQ(k(0, 1), k(1, 0));
}

TEST(CovarDense, EqualRowsGiveConstantMatrix) {
  Mat a = Mat::Constant(3, 2, 0.5);
  Mat b = Mat::Constant(4, 2, 0.5);
  const Mat k = covar_dense(a, b, Hp(1.3, 0.2, 2.5), false);
  EXPECT_TRUE(k.isApproxToConstant(2.5));
}

TEST(CovarDense, NoiseRequiresSameSet) {
  Mat a = Mat::Zero(2, 1), b = Mat::Ones(2, 1);
  EXPECT_THROW(covar_dense(a, b, Hp(1, 1, 1), true), UsageError);
  Mat c = Mat::Zero(2, 2);
  EXPECT_THROW(covar_dense(a, c, Hp(1, 1, 1), false), ShapeError);
}

TEST(CovarDense, SymmetricWithNoisyDiagonal) {
  std::mt19937_64 rng(3);
  const Mat x = random_matrix(20, 3, rng);
  const Hp hp(0.9, 0.3, 1.7);
  const Mat k = covar_dense(x, x, hp, true);
  EXPECT_EQ((k - k.transpose()).cwiseAbs().maxCoeff(), 0.0);
  for (Eigen::Index i = 0; i < k.rows(); ++i) EXPECT_NEAR(k(i, i), 1.7 + 0.3, 1e-15);
}

}  // namespace
}  // namespace blockgp::testing
