#pragma once

// The five floating-base parameterizations behind one interface.
//
//   chart        variables        difference                 integration
//   se3_tangent  xi (6)           Exp(xi2) (-) Exp(xi1)      Log(Exp(xi) (+) V h)
//   quat1        (p, rho) (7)     (p2 - p1, rho2 - rho1)     (p + R v h, nrm(rho + 1/2 L(rho) H w h))
//   quat2        (p, rho) (7)     (p2 - p1, rho2 - rho1)     Log_q(Exp_q(p, rho) (+) V h)
//   quat3        (p, rho) (7)     Exp_q(x2) (-) Exp_q(x1)    Log_q(Exp_q(p, rho) (+) V h)
//   rpy          (p, theta) (6)   (p2 - p1, theta2 - theta1) (p + R v h, theta + W(theta) w h)
//
// Velocities are body twists throughout; p_dot = R v_lin.

#include <array>
#include <string>
#include <string_view>

#include "fbopt/liegroups.hpp"

namespace fbopt::charts {

using lie::Mat3;
using lie::Se3Pose;
using lie::Twist;
using lie::Vec3;
using lie::Vec4;
using lie::Vec6;
using lie::VecX;
using diff::value;

enum class ChartKind { Se3Tangent, Quat1, Quat2, Quat3, Rpy };

inline constexpr std::array<ChartKind, 5> kAllCharts = {
    ChartKind::Se3Tangent, ChartKind::Quat1, ChartKind::Quat2, ChartKind::Quat3, ChartKind::Rpy};

std::string_view chart_name(ChartKind c);
// Accepts the canonical names: se3_tangent, quat1, quat2, quat3, rpy.
ChartKind parse_chart(std::string_view name);

constexpr bool is_quat_chart(ChartKind c) {
  return c == ChartKind::Quat1 || c == ChartKind::Quat2 || c == ChartKind::Quat3;
}

constexpr int chart_dim(ChartKind c) { return is_quat_chart(c) ? 7 : 6; }

// Length of base_difference output.
constexpr int difference_dim(ChartKind c) {
  return (c == ChartKind::Quat1 || c == ChartKind::Quat2) ? 7 : 6;
}

template <class S>
struct BaseCoords {
  ChartKind chart = ChartKind::Se3Tangent;
  VecX<S> data = VecX<S>::Zero(6);

  static BaseCoords Zero(ChartKind c) {
    BaseCoords x{c, VecX<S>::Zero(chart_dim(c))};
    if (is_quat_chart(c)) x.data(3) = S(1.0);
    return x;
  }

  Vec3<S> position() const { return data.template head<3>(); }
  lie::UnitQuat<S> quat() const { return lie::UnitQuat<S>::FromCoeffs(data.template segment<4>(3)); }
  lie::Rpy<S> angles() const { return lie::Rpy<S>::FromVector(data.template segment<3>(3)); }

  template <class T>
  BaseCoords<T> cast() const {
    return {chart, data.template cast<T>()};
  }
};

template <class S>
struct GeneralizedConfig {
  BaseCoords<S> base;
  VecX<S> joints;
};

template <class S>
struct GeneralizedVel {
  Twist<S> base;
  VecX<S> joints;

  // (lin, ang, joint rates)
  VecX<S> vector() const {
    VecX<S> v(6 + joints.size());
    v << base.lin, base.ang, joints;
    return v;
  }
  template <class Derived>
  static GeneralizedVel FromVector(const Eigen::MatrixBase<Derived>& v) {
    return {Twist<S>::FromTangent(v.template head<6>()), v.tail(v.size() - 6)};
  }
};

inline void check_chart(ChartKind expected, ChartKind got) {
  if (expected != got) throw ChartMismatch("base coordinates belong to a different chart");
}

template <class S>
Se3Pose<S> base_to_pose(const BaseCoords<S>& x) {
  switch (x.chart) {
    case ChartKind::Se3Tangent:
      return lie::exp_se3(x.data.template head<6>());
    case ChartKind::Rpy:
      return {lie::rpy_to_rot(x.angles()), x.position()};
    default:
      return lie::pose_from_parts(x.position(), lie::quat_normalize(x.data.template segment<4>(3)));
  }
}

// Chart coordinates of a pose: principal log for se3_tangent, canonical
// quaternion sign, roll-pitch-yaw via the atan2 extraction.
BaseCoords<double> coords_from_pose(ChartKind c, const lie::Pose& T,
                                    double gimbal_guard = lie::kDefaultGimbalGuard);

template <class S>
VecX<S> base_difference(ChartKind c, const BaseCoords<S>& x1, const BaseCoords<S>& x2) {
  check_chart(c, x1.chart);
  check_chart(c, x2.chart);
  switch (c) {
    case ChartKind::Se3Tangent:
    case ChartKind::Quat3:
      return lie::ominus(base_to_pose(x2), base_to_pose(x1));
    default:
      return x2.data - x1.data;
  }
}

namespace detail {

// Log_q(Exp_q(p, rho) (+) d) keeping the hemisphere of the incoming rho.
template <class S>
BaseCoords<S> retract_quat(const BaseCoords<S>& x, const Vec6<S>& d) {
  const Se3Pose<S> T = lie::oplus(base_to_pose(x), d);
  lie::PosQuat<S> parts = lie::parts_from_pose(T);
  if (value(parts.q.coeffs().dot(x.data.template segment<4>(3))) < 0.0) parts.q = -parts.q;
  BaseCoords<S> out{x.chart, VecX<S>(7)};
  out.data << parts.p, parts.q.coeffs();
  return out;
}

}  // namespace detail

template <class S>
BaseCoords<S> base_integrate(ChartKind c, const BaseCoords<S>& x, const Twist<S>& V, double h,
                             double gimbal_guard = lie::kDefaultGimbalGuard,
                             lie::LogInfo* info = nullptr) {
  check_chart(c, x.chart);
  const Vec6<S> d = V.tangent() * h;
  switch (c) {
    case ChartKind::Se3Tangent: {
      const Se3Pose<S> T = lie::oplus(lie::exp_se3(x.data.template head<6>()), d);
      return {c, lie::log_se3(T, info)};
    }
    case ChartKind::Quat1: {
      const lie::UnitQuat<S> q = x.quat();
      const Mat3<S> R = lie::quat_to_rot(lie::quat_normalize(q.coeffs()));
      const Vec4<S> raw = q.coeffs() + lie::quat_rate(q, V.ang) * h;
      BaseCoords<S> out{c, VecX<S>(7)};
      out.data << x.position() + R * V.lin * h, lie::quat_normalize(raw).coeffs();
      return out;
    }
    case ChartKind::Quat2:
    case ChartKind::Quat3:
      return detail::retract_quat(x, d);
    case ChartKind::Rpy: {
      const lie::Rpy<S> a = x.angles();
      const Mat3<S> W = lie::euler_rate_matrix(a, gimbal_guard);
      BaseCoords<S> out{c, VecX<S>(6)};
      out.data << x.position() + lie::rpy_to_rot(a) * V.lin * h, a.vector() + W * V.ang * h;
      // A step that jumps over pitch = +-pi/2 passes through the guard band.
      using std::cos;
      const double c0 = value(cos(a.pitch)), c1 = value(cos(out.data(4)));
      if (std::abs(c1) <= gimbal_guard || (c0 > 0.0) != (c1 > 0.0)) {
        throw GimbalLock("base_integrate: pitch crossed +-pi/2");
      }
      return out;
    }
  }
  return x;
}

// Zero iff x_next is the integrated successor of x.
template <class S>
VecX<S> residual_integration(ChartKind c, const BaseCoords<S>& x, const BaseCoords<S>& x_next,
                             const Twist<S>& V, double h,
                             double gimbal_guard = lie::kDefaultGimbalGuard) {
  return base_difference(c, base_integrate(c, x, V, h, gimbal_guard), x_next);
}

// Semi-implicit Euler: v' = v + a h, then q' from v'.
template <class S>
std::pair<GeneralizedConfig<S>, GeneralizedVel<S>> integrate_step(
    const GeneralizedConfig<S>& q, const GeneralizedVel<S>& v, const VecX<S>& a, double h,
    double gimbal_guard = lie::kDefaultGimbalGuard) {
  if (a.size() != 6 + q.joints.size() || v.joints.size() != q.joints.size()) {
    throw DimensionError("integrate_step: inconsistent dimensions");
  }
  const GeneralizedVel<S> v_next = GeneralizedVel<S>::FromVector(v.vector() + a * h);
  GeneralizedConfig<S> q_next{
      base_integrate(q.base.chart, q.base, v_next.base, h, gimbal_guard),
      q.joints + v_next.joints * h};
  return {q_next, v_next};
}

}  // namespace fbopt::charts
