#include <gtest/gtest.h>

#include <cmath>

#include "fbopt/charts.hpp"
#include "test_util.hpp"

namespace fbopt {
namespace {

using charts::BaseCoords;
using charts::ChartKind;
using lie::Pose;
using lie::Twist;
using testing::Rng;
using Vec6d = Eigen::Matrix<double, 6, 1>;

Twist<double> twist(const Vec6d& lin_ang) { return Twist<double>::FromTangent(lin_ang); }

TEST(Charts, NamesRoundtrip) {
  for (ChartKind c : charts::kAllCharts) EXPECT_EQ(charts::parse_chart(charts::chart_name(c)), c);
  EXPECT_THROW(charts::parse_chart("euler"), Error);
}

TEST(Charts, Dimensions) {
  EXPECT_EQ(charts::chart_dim(ChartKind::Se3Tangent), 6);
  EXPECT_EQ(charts::chart_dim(ChartKind::Quat1), 7);
  EXPECT_EQ(charts::chart_dim(ChartKind::Quat2), 7);
  EXPECT_EQ(charts::chart_dim(ChartKind::Quat3), 7);
  EXPECT_EQ(charts::chart_dim(ChartKind::Rpy), 6);
  EXPECT_EQ(charts::difference_dim(ChartKind::Quat1), 7);
  EXPECT_EQ(charts::difference_dim(ChartKind::Quat3), 6);
}

TEST(BaseToPose, ZeroAndHalfTurn) {
  for (ChartKind c : charts::kAllCharts) {
    const Pose T = charts::base_to_pose(BaseCoords<double>::Zero(c));
    EXPECT_TRUE(T.rot.isIdentity(0.0)) << charts::chart_name(c);
    EXPECT_TRUE(T.trans.isZero(0.0));
  }
  BaseCoords<double> x{ChartKind::Quat1, Eigen::VectorXd(7)};
  x.data << 1, 0, 0, 0, 0, 0, 1;
  const Pose T = charts::base_to_pose(x);
  EXPECT_LT((T.rot * Eigen::Vector3d::UnitX() + Eigen::Vector3d::UnitX()).norm(), 1e-15);
  EXPECT_TRUE(T.trans.isApprox(Eigen::Vector3d(1, 0, 0)));
}

TEST(BaseToPose, CoordsRoundtrip) {
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const Pose T = rng.pose(M_PI - 1e-3, 2.0);
    for (ChartKind c : charts::kAllCharts) {
      const BaseCoords<double> x = charts::coords_from_pose(c, T);
      ASSERT_LT(testing::pose_dist(charts::base_to_pose(x), T), 1e-9) << charts::chart_name(c);
    }
    const Vec6d xi = lie::log_se3(T);
    ASSERT_LT(testing::pose_dist(charts::base_to_pose(BaseCoords<double>{ChartKind::Se3Tangent, xi}), T), 1e-9);
  }
}

TEST(BaseDifference, ZeroOnEqualCoords) {
  Rng rng(2);
  const Pose T = rng.pose(2.0);
  for (ChartKind c : charts::kAllCharts) {
    const BaseCoords<double> x = charts::coords_from_pose(c, T);
    const Eigen::VectorXd d = charts::base_difference(c, x, x);
    EXPECT_EQ(d.size(), charts::difference_dim(c));
    EXPECT_LT(d.norm(), 1e-12) << charts::chart_name(c);
  }
}

TEST(BaseDifference, QuatComponentwise) {
  BaseCoords<double> a{ChartKind::Quat1, Eigen::VectorXd::Zero(7)};
  BaseCoords<double> b = a;
  a.data(3) = 1.0;
  b.data(6) = 1.0;
  Eigen::VectorXd expect(7);
  expect << 0, 0, 0, -1, 0, 0, 1;
  EXPECT_EQ(charts::base_difference(ChartKind::Quat1, a, b), expect);
}

TEST(BaseDifference, Se3FirstOrder) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const Vec6d xi1 = rng.tangent(2.5, 1.0);
    const Vec6d dx = rng.tangent(1.0, 1.0);
    double prev = 0.0;
    for (double eps : {1e-3, 5e-4}) {
      const Vec6d xi2 = xi1 + eps * dx;
      const Eigen::VectorXd d = charts::base_difference(ChartKind::Se3Tangent, BaseCoords<double>{ChartKind::Se3Tangent, xi1},
                                                        BaseCoords<double>{ChartKind::Se3Tangent, xi2});
      const double err = (d - lie::jac_right_se3(xi1) * (eps * dx)).norm();
      EXPECT_LT(err, 10.0 * eps * eps);
      if (prev > 0.0) EXPECT_GT(prev / err, 3.0);
      prev = err;
    }
  }
}

TEST(BaseDifference, ChartMismatch) {
  EXPECT_THROW(charts::base_difference(ChartKind::Quat1, BaseCoords<double>::Zero(ChartKind::Quat1),
                                       BaseCoords<double>::Zero(ChartKind::Quat2)),
               ChartMismatch);
}

TEST(BaseIntegrate, ZeroTwistKeepsCoords) {
  Rng rng(4);
  const Pose T = rng.pose(2.0);
  for (ChartKind c : charts::kAllCharts) {
    const BaseCoords<double> x = charts::coords_from_pose(c, T);
    const BaseCoords<double> y = charts::base_integrate(c, x, Twist<double>{}, 0.1);
    EXPECT_LT((y.data - x.data).norm(), 1e-12) << charts::chart_name(c);
  }
}

TEST(BaseIntegrate, Quat1SpinStep) {
  const BaseCoords<double> x = BaseCoords<double>::Zero(ChartKind::Quat1);
  Twist<double> V;
  V.ang << 0, 0, 1;
  const BaseCoords<double> y = charts::base_integrate(ChartKind::Quat1, x, V, 0.1);
  const Eigen::Vector4d expect = Eigen::Vector4d(1, 0, 0, 0.05).normalized();
  EXPECT_LT((y.data.segment<4>(3) - expect).norm(), 1e-15);
}

TEST(BaseIntegrate, Quat2AndQuat3Agree) {
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const Pose T = rng.pose(3.0);
    BaseCoords<double> x2 = charts::coords_from_pose(ChartKind::Quat2, T);
    BaseCoords<double> x3 = charts::coords_from_pose(ChartKind::Quat3, T);
    for (int k = 0; k < 10; ++k) {
      const Twist<double> V = twist(rng.tangent(3.0, 2.0));
      x2 = charts::base_integrate(ChartKind::Quat2, x2, V, 0.05);
      x3 = charts::base_integrate(ChartKind::Quat3, x3, V, 0.05);
      ASSERT_LT((x2.data - x3.data).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(BaseIntegrate, GroupChartsExactForConstantTwist) {
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    const Pose T0 = rng.pose(1.0);
    const Vec6d v = rng.tangent(4.0, 2.0);
    const double h = rng.uniform(0.01, 0.2);
    const int steps = 20;
    const Pose exact = T0 * lie::exp_se3(Vec6d(v * h * steps));
    for (ChartKind c : {ChartKind::Se3Tangent, ChartKind::Quat2, ChartKind::Quat3}) {
      BaseCoords<double> x = charts::coords_from_pose(c, T0);
      for (int k = 0; k < steps; ++k) x = charts::base_integrate(c, x, twist(v), h);
      ASSERT_LT(testing::pose_dist(charts::base_to_pose(x), exact), 1e-10) << charts::chart_name(c);
    }
  }
}

TEST(BaseIntegrate, Quat1StaysUnitNorm) {
  Rng rng(7);
  BaseCoords<double> x = BaseCoords<double>::Zero(ChartKind::Quat1);
  for (int k = 0; k < 5000; ++k) {
    x = charts::base_integrate(ChartKind::Quat1, x, twist(rng.tangent(5.0, 1.0)), 0.02);
    ASSERT_NEAR(x.data.segment<4>(3).norm(), 1.0, 4e-16);
  }
}

// Endpoint poses of a fixed twist sequence integrated with step h.
std::vector<Pose> endpoints(const std::vector<Vec6d>& twists, const Pose& T0, double h) {
  std::vector<Pose> out;
  for (ChartKind c : charts::kAllCharts) {
    BaseCoords<double> x = charts::coords_from_pose(c, T0);
    for (const Vec6d& v : twists) x = charts::base_integrate(c, x, twist(v), h);
    out.push_back(charts::base_to_pose(x));
  }
  return out;
}

TEST(ChartConsistency, PairwiseDistanceShrinksQuadratically) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Vec6d> twists;
    for (int k = 0; k < 10; ++k) twists.push_back(rng.tangent(2.0, 1.0));
    const Pose T0 = lie::exp_se3(rng.tangent(0.5, 1.0));
    const auto coarse = endpoints(twists, T0, 0.02);
    const auto fine = endpoints(twists, T0, 0.01);
    for (size_t a = 0; a < coarse.size(); ++a) {
      for (size_t b = a + 1; b < coarse.size(); ++b) {
        const double dc = lie::ominus(coarse[a], coarse[b]).norm();
        const double df = lie::ominus(fine[a], fine[b]).norm();
        if (dc < 1e-12) continue;  // identical integrators (quat2/quat3, se3 vs group charts)
        EXPECT_GE(dc / df, 3.5) << charts::chart_name(charts::kAllCharts[a]) << " vs "
                                << charts::chart_name(charts::kAllCharts[b]);
      }
    }
  }
}

TEST(ChartConsistency, StepHalvingConvergesToExactFlow) {
  // Piecewise-constant twist over a fixed horizon: every chart converges to
  // the group flow with order >= 1.
  Rng rng(9);
  std::vector<Vec6d> pieces;
  for (int k = 0; k < 4; ++k) pieces.push_back(rng.tangent(1.5, 1.0));
  Pose exact = Pose::Identity();
  for (const Vec6d& v : pieces) exact = exact * lie::exp_se3(Vec6d(v * 0.25));
  for (ChartKind c : charts::kAllCharts) {
    double prev = 0.0;
    for (int sub : {8, 16, 32}) {
      BaseCoords<double> x = BaseCoords<double>::Zero(c);
      for (const Vec6d& v : pieces) {
        for (int s = 0; s < sub; ++s) x = charts::base_integrate(c, x, twist(v), 0.25 / sub);
      }
      const double err = lie::ominus(charts::base_to_pose(x), exact).norm();
      if (prev > 1e-12) EXPECT_GT(prev / err, 1.8) << charts::chart_name(c);
      prev = err;
    }
  }
}

TEST(GimbalLock, RpyFailsWhereOtherChartsIntegrate) {
  // Steady pitch-up rotation carrying pitch through +pi/2.
  Vec6d v;
  v << 0.5, 0, 0, 0, 1.0, 0;
  const double h = 0.05;
  for (ChartKind c : charts::kAllCharts) {
    BaseCoords<double> x = BaseCoords<double>::Zero(c);
    auto run = [&] {
      for (int k = 0; k < 60; ++k) x = charts::base_integrate(c, x, twist(v), h);
    };
    if (c == ChartKind::Rpy) {
      EXPECT_THROW(run(), GimbalLock);
      // The failure happens at the step that crosses the singular pitch.
      EXPECT_LT(x.data(4), M_PI / 2);
      EXPECT_GT(x.data(4), M_PI / 2 - h - 1e-12);
    } else {
      EXPECT_NO_THROW(run()) << charts::chart_name(c);
    }
  }
}

TEST(GimbalLock, RaisedExactlyInGuardBand) {
  BaseCoords<double> x{ChartKind::Rpy, Eigen::VectorXd::Zero(6)};
  x.data(4) = M_PI / 2 - 1e-3;
  Twist<double> V;
  V.ang << 0, 1, 0;
  // Lands 1e-4 short of pi/2: outside the default band.
  EXPECT_NO_THROW(charts::base_integrate(ChartKind::Rpy, x, V, 0.9e-3));
  // Lands inside the band.
  EXPECT_THROW(charts::base_integrate(ChartKind::Rpy, x, V, 1e-3), GimbalLock);
  // Starting inside the band fails on the rate map.
  x.data(4) = M_PI / 2;
  EXPECT_THROW(charts::base_integrate(ChartKind::Rpy, x, Twist<double>{}, 0.01), GimbalLock);
}

TEST(DoubleCover, QuaternionEvaluatorsIgnoreSign) {
  Rng rng(10);
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector3d p = rng.vec3(2.0);
    const Eigen::Vector4d q = rng.quat();
    const Twist<double> V = twist(rng.tangent(3.0, 1.0));
    for (ChartKind c : {ChartKind::Quat1, ChartKind::Quat2, ChartKind::Quat3}) {
      BaseCoords<double> a{c, Eigen::VectorXd(7)}, b{c, Eigen::VectorXd(7)};
      a.data << p, q;
      b.data << p, -q;
      const Pose Ta = charts::base_to_pose(a), Tb = charts::base_to_pose(b);
      ASSERT_LT(testing::pose_dist(Ta, Tb), 1e-12);
      const BaseCoords<double> ca = charts::coords_from_pose(c, Ta), cb = charts::coords_from_pose(c, Tb);
      ASSERT_LT((ca.data - cb.data).cwiseAbs().maxCoeff(), 1e-12);
      const Pose Ia = charts::base_to_pose(charts::base_integrate(c, a, V, 0.05));
      const Pose Ib = charts::base_to_pose(charts::base_integrate(c, b, V, 0.05));
      ASSERT_LT(testing::pose_dist(Ia, Ib), 1e-12) << charts::chart_name(c);
    }
    // The group-level difference does not see the sign at all.
    BaseCoords<double> a{ChartKind::Quat3, Eigen::VectorXd(7)}, b = a, t = a;
    a.data << p, q;
    b.data << p, -q;
    t.data << rng.vec3(), rng.quat();
    ASSERT_LT((charts::base_difference(ChartKind::Quat3, a, t) - charts::base_difference(ChartKind::Quat3, b, t))
                  .cwiseAbs()
                  .maxCoeff(),
              1e-12);
  }
}

TEST(ResidualIntegration, ZeroOnSuccessorAndLinearInPerturbation) {
  Rng rng(11);
  for (ChartKind c : charts::kAllCharts) {
    const BaseCoords<double> x = charts::coords_from_pose(c, rng.pose(1.0));
    const Twist<double> V = twist(rng.tangent(2.0, 1.0));
    const BaseCoords<double> next = charts::base_integrate(c, x, V, 0.05);
    EXPECT_LT(charts::residual_integration(c, x, next, V, 0.05).norm(), 1e-12) << charts::chart_name(c);
    if (c == ChartKind::Quat1 || c == ChartKind::Rpy) {
      BaseCoords<double> moved = next;
      const Eigen::VectorXd delta = rng.vec(moved.data.size(), 1e-3);
      moved.data += delta;
      EXPECT_LT((charts::residual_integration(c, x, moved, V, 0.05) - delta).norm(), 1e-15);
    }
  }
}

TEST(IntegrateStep, SemiImplicit) {
  Rng rng(12);
  for (ChartKind c : charts::kAllCharts) {
    charts::GeneralizedConfig<double> q{charts::coords_from_pose(c, rng.pose(1.0)), rng.vec(3)};
    charts::GeneralizedVel<double> v{twist(rng.tangent(1.0)), rng.vec(3)};
    const Eigen::VectorXd a = rng.vec(9, 3.0);
    const double h = 0.05;
    const auto [qn, vn] = charts::integrate_step(q, v, a, h);
    EXPECT_LT((vn.vector() - (v.vector() + a * h)).norm(), 1e-15);
    EXPECT_LT((qn.joints - (q.joints + vn.joints * h)).norm(), 1e-15);
    const BaseCoords<double> base = charts::base_integrate(c, q.base, vn.base, h);
    EXPECT_LT((qn.base.data - base.data).norm(), 1e-15);
    EXPECT_THROW(charts::integrate_step(q, v, Eigen::VectorXd(a.head(8)), h), DimensionError);
  }
}

}  // namespace
}  // namespace fbopt
