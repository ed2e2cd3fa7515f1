#include <gtest/gtest.h>

#include "deconv/splines.hpp"
#include "oracles.hpp"

using namespace deconv;

TEST(KnotVector, LayoutFollowsClampedConvention) {
  const auto kv = KnotVector::equidistant(2, 5, 0.0, 10.0);
  EXPECT_EQ(kv.knots().size(), 2u * 2 + 5 + 1);
  EXPECT_EQ(kv.basis_count(), 7);
  EXPECT_EQ(kv.knots()[0], 0.0);
  EXPECT_EQ(kv.knots()[2], 0.0);
  EXPECT_DOUBLE_EQ(kv.knots()[3], 2.0);
  EXPECT_EQ(kv.knots().back(), 10.0);
}

TEST(KnotVector, RejectsBadRanges) {
  EXPECT_THROW(KnotVector::equidistant(2, 5, 1.0, 1.0), Error);
  EXPECT_THROW(KnotVector(2, 0.0, 1.0, {0.5, 0.4}), Error);
}

TEST(BsplineBasis, IndicatorBasis) {
  const auto kv = KnotVector::equidistant(0, 2, 0.0, 1.0);
  const Vector b = bspline_basis(0.25, kv);
  ASSERT_EQ(b.size(), 2);
  EXPECT_EQ(b(0), 1.0);
  EXPECT_EQ(b(1), 0.0);
}

TEST(BsplineBasis, OutOfSupportThrows) {
  const auto kv = KnotVector::equidistant(2, 5, 0.0, 1.0);
  try {
    bspline_basis(1.0 + 1e-9, kv);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::out_of_support);
  }
}

TEST(BsplineBasis, PartitionOfUnityGrid) {
  for (int q = 0; q <= 3; ++q) {
    for (int L = 2; L <= 10; ++L) {
      const auto kv = KnotVector::equidistant(q, L, -1.5, 4.0);
      for (int g = 0; g < 1000; ++g) {
        const double x = -1.5 + 5.5 * g / 999.0;
        const Vector b = bspline_basis(x, kv);
        ASSERT_NEAR(b.sum(), 1.0, 1e-12) << "q=" << q << " L=" << L << " x=" << x;
        ASSERT_GE(b.minCoeff(), 0.0);
        ASSERT_LE((b.array() != 0.0).count(), q + 1);
      }
    }
  }
}

TEST(BsplineBasis, MatchesRecursionOracle) {
  const auto kv = KnotVector::equidistant(2, 5, 0.0, 3.0);
  for (int g = 0; g < 100; ++g) {
    const double x = 3.0 * g / 99.0;
    const Vector b = bspline_basis(x, kv);
    const auto ref = oracle::cox_de_boor_basis(kv.knots(), 2, x);
    for (int j = 0; j < b.size(); ++j) EXPECT_NEAR(b(j), ref[static_cast<std::size_t>(j)], 1e-12) << "x=" << x;
  }
}

TEST(SecondDifferencePenalty, LinearNullSpace) {
  const Matrix p = second_difference_penalty(8);
  Vector xi(8);
  for (int j = 0; j < 8; ++j) xi(j) = 1.5 - 0.7 * j;
  EXPECT_NEAR(xi.dot(p * xi), 0.0, 1e-12);
}

TEST(SecondDifferencePenalty, HandOracle) {
  const Matrix p = second_difference_penalty(3);
  const Vector xi = Eigen::Vector3d(0.0, 1.0, 0.0);
  EXPECT_DOUBLE_EQ(xi.dot(p * xi), 4.0);
}

TEST(SecondDifferencePenalty, MatchesLoopOracle) {
  RngStream rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Vector xi(8);
    for (int j = 0; j < 8; ++j) xi(j) = rng.normal() * 3.0;
    double loop = 0.0;
    for (int j = 0; j + 2 < 8; ++j) loop += std::pow(xi(j + 2) - 2.0 * xi(j + 1) + xi(j), 2);
    EXPECT_NEAR(xi.dot(second_difference_penalty(8) * xi), loop, 1e-12 * std::max(1.0, loop));
  }
}

TEST(SecondDifferencePenalty, NullSpaceIsExactlyAffine) {
  const int J = 9;
  const Matrix p = second_difference_penalty(J);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(p);
  // exactly two zero eigenvalues
  int zeros = 0;
  for (int j = 0; j < J; ++j) zeros += std::abs(eig.eigenvalues()(j)) < 1e-10;
  EXPECT_EQ(zeros, 2);
  // and a non-affine vector is penalised
  RngStream rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    Vector xi(J);
    for (int j = 0; j < J; ++j) xi(j) = 2.0 + 0.5 * j;
    xi(1 + static_cast<int>(rng.uniform_index(J - 2))) += 0.1;
    EXPECT_GT(xi.dot(p * xi), 1e-3);
  }
}

TEST(SecondDifferencePenalty, TooFewCoefficients) {
  try {
    second_difference_penalty(2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::too_few_coefficients);
  }
}

TEST(VarianceFunction, ZeroAndConstantCoefficients) {
  VarianceFunction vf{KnotVector::equidistant(2, 5, 0.0, 1.0), Vector::Zero(7), 1.0};
  for (double x : {0.0, 0.13, 0.5, 0.99, 1.0}) EXPECT_NEAR(variance_at(vf, x), 1.0, 1e-14);
  vf.xi = Vector::Constant(7, 0.8);
  for (double x : {0.0, 0.37, 1.0}) EXPECT_NEAR(variance_at(vf, x), std::exp(0.8), 1e-13);
}

TEST(VarianceFunction, DirectFormulaAtKnotMidpoints) {
  RngStream rng(9);
  const auto kv = KnotVector::equidistant(2, 5, -2.0, 6.0);
  Vector xi(7);
  for (int j = 0; j < 7; ++j) xi(j) = rng.normal();
  VarianceFunction vf{kv, xi, 1.0};
  for (int s = 0; s < 5; ++s) {
    const double x = -2.0 + 8.0 * (s + 0.5) / 5.0;
    const double direct = bspline_basis(x, kv).dot(xi.array().exp().matrix());
    EXPECT_NEAR(variance_at(vf, x), direct, 1e-14 * direct);
  }
  EXPECT_THROW(variance_at(vf, 6.5), Error);
}

TEST(VarianceFunction, ContinuityAcrossSupport) {
  RngStream rng(10);
  const auto kv = KnotVector::equidistant(2, 5, 0.0, 5.0);
  Vector xi(7);
  for (int j = 0; j < 7; ++j) xi(j) = rng.normal();
  VarianceFunction vf{kv, xi, 1.0};
  // slope bound: |v'| <= max |d/dx B_j| * max exp(xi) <= (2q/h) * max exp(xi)
  const double bound = 2.0 * 2.0 / 1.0 * xi.array().exp().maxCoeff();
  const double h = 1e-8;
  for (int g = 0; g < 500; ++g) {
    const double x = 5.0 * g / 500.0;
    EXPECT_LE(std::abs(vf.variance_at(x) - vf.variance_at(std::min(5.0, x + h))), bound * h * 1.01 + 1e-15);
  }
}
