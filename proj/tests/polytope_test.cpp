#include "psmpc/polytope.hpp"

#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "psmpc/errors.hpp"

namespace psmpc {
namespace {

Polytope UnitBox(int n) {
  return Polytope::FromBox(-Eigen::VectorXd::Ones(n), Eigen::VectorXd::Ones(n));
}

Polytope Interval(double lo, double hi) {
  return Polytope::FromBox(Eigen::VectorXd::Constant(1, lo),
                           Eigen::VectorXd::Constant(1, hi));
}

TEST(FromBox, UnitIntervalRows) {
  const Polytope p = UnitBox(1);
  ASSERT_EQ(p.num_rows(), 2);
  EXPECT_EQ(p.H()(0, 0), 1.0);
  EXPECT_EQ(p.H()(1, 0), -1.0);
  EXPECT_EQ(p.h(), Eigen::Vector2d(1, 1));
}

TEST(FromBox, AircraftStateAndInputBoxes) {
  const Polytope x = Polytope::FromBox(Eigen::Vector4d(-10, -100, -10, -50),
                                       Eigen::Vector4d(10, 100, 10, 50));
  EXPECT_EQ(x.num_rows(), 8);
  EXPECT_EQ(x.dim(), 4);
  EXPECT_TRUE(x.Contains(Eigen::Vector4d(-10, 0, 0, 0)));
  EXPECT_FALSE(x.Contains(Eigen::Vector4d(0, 0, 10.5, 0)));
  const Polytope u = Polytope::FromBox(Eigen::Vector2d(-50, 0),
                                       Eigen::Vector2d(50, 1));
  EXPECT_EQ(u.num_rows(), 4);
  EXPECT_TRUE(u.Contains(Eigen::Vector2d(0, 0.5)));
  EXPECT_FALSE(u.Contains(Eigen::Vector2d(0, -0.1)));
}

TEST(FromBox, RejectsEmptyOrFlatBox) {
  EXPECT_THROW(Interval(1.0, 1.0), InvalidSet);
  EXPECT_THROW(Interval(2.0, 1.0), InvalidSet);
}

TEST(Polytope, NormalizesRowsAndRejectsBadShapes) {
  const Polytope p((Eigen::MatrixXd(1, 2) << 3, 4).finished(),
                   Eigen::VectorXd::Constant(1, 10.0));
  EXPECT_NEAR(p.H().row(0).norm(), 1.0, 1e-15);
  EXPECT_NEAR(p.h()(0), 2.0, 1e-15);
  EXPECT_THROW(Polytope(Eigen::MatrixXd::Ones(2, 2), Eigen::VectorXd::Ones(3)),
               InvalidSet);
}

TEST(Contains, ToleranceIsAbsolute) {
  const Polytope p = UnitBox(1);
  EXPECT_TRUE(p.Contains(Eigen::VectorXd::Zero(1)));
  EXPECT_TRUE(p.Contains(Eigen::VectorXd::Constant(1, 1.0)));
  EXPECT_FALSE(p.Contains(Eigen::VectorXd::Constant(1, 1.0 + 1e-6)));
  EXPECT_THROW(p.Contains(Eigen::VectorXd::Zero(2)), InvalidSet);
}

TEST(Intersect, ShiftedIntervals) {
  const Polytope p = Interval(0, 2).Intersect(Interval(1, 3)).RemoveRedundancy();
  EXPECT_EQ(p.num_rows(), 2);
  const auto [lo, hi] = p.BoundingBox();
  EXPECT_NEAR(lo(0), 1.0, 1e-8);
  EXPECT_NEAR(hi(0), 2.0, 1e-8);
}

TEST(Intersect, NestedBoxesReduceToInner) {
  const Polytope inner = UnitBox(2);
  const Polytope outer = Polytope::FromBox(-2 * Eigen::VectorXd::Ones(2),
                                           2 * Eigen::VectorXd::Ones(2));
  const Polytope p = outer.Intersect(inner).RemoveRedundancy();
  ASSERT_EQ(p.num_rows(), 4);
  EXPECT_TRUE(p.h().isApprox(Eigen::VectorXd::Ones(4)));
}

TEST(Intersect, Idempotent) {
  const Polytope p = UnitBox(3);
  EXPECT_EQ(p.Intersect(p).RemoveRedundancy().num_rows(), 6);
  EXPECT_THROW(p.Intersect(UnitBox(2)), InvalidSet);
}

TEST(RemoveRedundancy, SingleRowUnchangedAndEmptyThrows) {
  const Polytope half((Eigen::MatrixXd(1, 2) << 1, 0).finished(),
                      Eigen::VectorXd::Ones(1));
  EXPECT_EQ(half.RemoveRedundancy().num_rows(), 1);
  const Polytope empty = Interval(0, 1).Intersect(Interval(2, 3));
  EXPECT_TRUE(empty.IsEmpty());
  EXPECT_THROW(empty.RemoveRedundancy(), EmptySet);
}

TEST(Support, BoxAndSimplex) {
  const Polytope box = UnitBox(2);
  EXPECT_NEAR(box.Support(Eigen::Vector2d(1, 0)), 1.0, 1e-8);
  EXPECT_NEAR(box.Support(Eigen::Vector2d(1, 1)), 2.0, 1e-8);
  const Polytope simplex((Eigen::MatrixXd(3, 2) << -1, 0, 0, -1, 1, 1).finished(),
                         Eigen::Vector3d(0, 0, 1));
  EXPECT_NEAR(simplex.Support(Eigen::Vector2d(1, 1)), 1.0, 1e-8);
}

TEST(Support, UnboundedAndEmptyThrow) {
  const Polytope half((Eigen::MatrixXd(1, 2) << 1, 0).finished(),
                      Eigen::VectorXd::Ones(1));
  EXPECT_THROW(half.Support(Eigen::Vector2d(0, 1)), Unbounded);
  const Polytope empty = Interval(0, 1).Intersect(Interval(2, 3));
  EXPECT_THROW(empty.Support(Eigen::VectorXd::Ones(1)), EmptySet);
}

TEST(Support, OppositeDirectionsNeverCross) {
  std::mt19937 rng(17);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + trial % 3;
    Eigen::MatrixXd H(2 * n + 4, n);
    Eigen::VectorXd h(2 * n + 4);
    H.topRows(n) = Eigen::MatrixXd::Identity(n, n);
    H.middleRows(n, n) = -Eigen::MatrixXd::Identity(n, n);
    h.head(2 * n).setConstant(3.0);
    for (int r = 0; r < 4; ++r) {
      H.row(2 * n + r) = Eigen::RowVectorXd::NullaryExpr(n, [&] { return nd(rng); });
      h(2 * n + r) = 0.1 + std::abs(nd(rng));
    }
    const Polytope p(H, h);
    const Eigen::VectorXd d = Eigen::VectorXd::NullaryExpr(n, [&] { return nd(rng); });
    EXPECT_GE(p.Support(d) + p.Support(-d), -1e-9) << trial;
    // Cross-check against brute force on the normalized representation.
    const auto oracle = testing::VertexEnumerationSupport(p.H(), p.h(), d);
    ASSERT_TRUE(oracle.has_value());
    EXPECT_NEAR(p.Support(d), *oracle, 1e-7) << trial;
  }
}

TEST(RemoveRedundancy, PreservesMembership) {
  std::mt19937 rng(23);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(-2.5, 2.5);
  const int n = 3;
  Eigen::MatrixXd H(2 * n + 12, n);
  Eigen::VectorXd h(H.rows());
  H.topRows(n) = Eigen::MatrixXd::Identity(n, n);
  H.middleRows(n, n) = -Eigen::MatrixXd::Identity(n, n);
  h.head(2 * n).setConstant(2.0);
  for (int r = 0; r < 12; ++r) {
    H.row(2 * n + r) = Eigen::RowVectorXd::NullaryExpr(n, [&] { return nd(rng); });
    h(2 * n + r) = 0.5 + 2.0 * std::abs(nd(rng));
  }
  const Polytope p(H, h);
  const Polytope reduced = p.RemoveRedundancy();
  EXPECT_LT(reduced.num_rows(), p.num_rows());
  for (int k = 0; k < 10000; ++k) {
    const Eigen::VectorXd x = Eigen::VectorXd::NullaryExpr(n, [&] { return ud(rng); });
    ASSERT_EQ(p.Contains(x), reduced.Contains(x)) << k;
  }
}

TEST(Scaled, ShrinksAboutOrigin) {
  const Polytope p = UnitBox(2).Scaled(0.5);
  EXPECT_TRUE(p.Contains(Eigen::Vector2d(0.5, -0.5)));
  EXPECT_FALSE(p.Contains(Eigen::Vector2d(0.6, 0.0)));
}

}  // namespace
}  // namespace psmpc
