#pragma once

// SO(3)/SE(3) group operations, tangent-space maps and Jacobians, unit
// quaternion kinematics and roll-pitch-yaw kinematics.
//
// Every function is templated on the scalar so the same code runs on
// doubles and on diff::Dual. Tangent vectors of SE(3) are ordered
// (linear, angular) and increments are expressed in the body frame:
//   T (+) d = T * Exp(d),   T2 (-) T1 = Log(T1^-1 * T2).

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <utility>

#include "fbopt/dual.hpp"
#include "fbopt/errors.hpp"

namespace fbopt::lie {

template <class S> using Vec3 = Eigen::Matrix<S, 3, 1>;
template <class S> using Vec4 = Eigen::Matrix<S, 4, 1>;
template <class S> using Vec6 = Eigen::Matrix<S, 6, 1>;
template <class S> using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S> using Mat3 = Eigen::Matrix<S, 3, 3>;
template <class S> using Mat4 = Eigen::Matrix<S, 4, 4>;
template <class S> using Mat6 = Eigen::Matrix<S, 6, 6>;
template <class S> using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

using diff::value;

// Below this angle the closed forms of exp/log switch to Taylor series.
inline constexpr double kSmallAngle = 1e-4;
// log_so3 extracts the axis from the symmetric part when theta > pi - band.
inline constexpr double kNearPiBand = 1e-3;
inline constexpr double kDefaultGimbalGuard = 1e-6;
inline constexpr double kReorthoTrigger = 1e-12;

namespace detail {

// Coefficient functions of t = theta^2. The series bands are sized to the
// cancellation order of each closed form.

// sin(th)/th
template <class S>
S sin_over(const S& t) {
  using std::sin;
  using std::sqrt;
  if (value(t) < kSmallAngle * kSmallAngle) return 1.0 - t / 6.0 + t * t / 120.0;
  const S th = sqrt(t);
  return sin(th) / th;
}

// (1 - cos th)/th^2
template <class S>
S one_minus_cos_over(const S& t) {
  using std::sin;
  using std::sqrt;
  if (value(t) < kSmallAngle * kSmallAngle) return 0.5 - t / 24.0 + t * t / 720.0;
  const S th = sqrt(t);
  const S sh = sin(th * 0.5);
  return 2.0 * sh * sh / t;
}

// (th - sin th)/th^3
template <class S>
S th_minus_sin_over(const S& t) {
  using std::sin;
  using std::sqrt;
  if (value(t) < 1e-4) return 1.0 / 6.0 - t / 120.0 + t * t / 5040.0 - t * t * t / 362880.0;
  const S th = sqrt(t);
  return (th - sin(th)) / (t * th);
}

// (1/th^2) (1 - (th/2) cot(th/2)); the quadratic coefficient of Jl^-1.
template <class S>
S jinv_coef(const S& t) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  if (value(t) < 1e-4) {
    return 1.0 / 12.0 + t / 720.0 + t * t / 30240.0 + t * t * t / 1209600.0;
  }
  const S th = sqrt(t);
  const S half = th * 0.5;
  return (1.0 - half * cos(half) / sin(half)) / t;
}

// (th^2 + 2 cos th - 2)/(2 th^4)
template <class S>
S q_coef2(const S& t) {
  using std::cos;
  using std::sqrt;
  if (value(t) < 1e-2) {
    return 1.0 / 24.0 - t / 720.0 + t * t / 40320.0 - t * t * t / 3628800.0;
  }
  const S th = sqrt(t);
  return (t + 2.0 * cos(th) - 2.0) / (2.0 * t * t);
}

// (2 th - 3 sin th + th cos th)/(2 th^5)
template <class S>
S q_coef3(const S& t) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  if (value(t) < 1e-2) {
    return 1.0 / 120.0 - t / 2520.0 + t * t / 120960.0 - t * t * t / 9979200.0;
  }
  const S th = sqrt(t);
  return (2.0 * th - 3.0 * sin(th) + th * cos(th)) / (2.0 * t * t * th);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// SO(3)

template <class Derived>
Mat3<typename Derived::Scalar> hat3(const Eigen::MatrixBase<Derived>& w) {
  using S = typename Derived::Scalar;
  Mat3<S> m;
  m << S(0.0), -w(2), w(1),
       w(2), S(0.0), -w(0),
       -w(1), w(0), S(0.0);
  return m;
}

template <class Derived>
Vec3<typename Derived::Scalar> vee3(const Eigen::MatrixBase<Derived>& m) {
  return Vec3<typename Derived::Scalar>(m(2, 1), m(0, 2), m(1, 0));
}

template <class Derived>
Mat3<typename Derived::Scalar> exp_so3(const Eigen::MatrixBase<Derived>& w) {
  using S = typename Derived::Scalar;
  const Vec3<S> v = w;
  const S t = v.dot(v);
  const Mat3<S> W = hat3(v);
  return Mat3<S>::Identity() + detail::sin_over(t) * W + detail::one_minus_cos_over(t) * (W * W);
}

// Diagnostics of a logarithm evaluation.
struct LogInfo {
  bool near_pi = false;
};

enum class NearPiPolicy { Report, Throw };

// Principal logarithm, angle in [0, pi]. Near pi the axis is read from the
// symmetric part; its sign follows the skew part when that is informative and
// otherwise makes the largest-magnitude axis component positive.
template <class S>
Vec3<S> log_so3(const Mat3<S>& R, LogInfo* info = nullptr,
                NearPiPolicy policy = NearPiPolicy::Report) {
  using std::atan2;
  using std::sqrt;
  const S cos_t = (R.trace() - 1.0) * 0.5;
  const Vec3<S> sv = 0.5 * vee3(R - R.transpose());  // sin(th) * axis
  const S sin2 = sv.dot(sv);

  if (value(sin2) < kSmallAngle * kSmallAngle && value(cos_t) > 0.0) {
    // th/sin th as a series in sin^2 th.
    return sv * (1.0 + sin2 / 6.0 + 3.0 * sin2 * sin2 / 40.0);
  }
  if (value(cos_t) < -std::cos(kNearPiBand)) {
    if (info) info->near_pi = true;
    if (policy == NearPiPolicy::Throw) throw AngleNearPi("log_so3: rotation angle near pi");
    const Mat3<S> sym = 0.5 * (R + R.transpose());
    const Mat3<S> aat = (sym - cos_t * Mat3<S>::Identity()) / (1.0 - cos_t);
    int i = 0;
    for (int k = 1; k < 3; ++k) {
      if (value(aat(k, k)) > value(aat(i, i))) i = k;
    }
    Vec3<S> axis;
    const S ai = sqrt(aat(i, i));
    for (int k = 0; k < 3; ++k) axis(k) = (k == i) ? ai : aat(i, k) / ai;
    const double align = value(axis.dot(sv));
    if (std::abs(align) > 1e-12 && align < 0.0) axis = -axis;
    const S th = atan2(sqrt(sin2), cos_t);
    return th * axis;
  }
  const S s = sqrt(sin2);
  const S th = atan2(s, cos_t);
  return sv * (th / s);
}

template <class Derived>
Mat3<typename Derived::Scalar> so3_left_jacobian(const Eigen::MatrixBase<Derived>& w) {
  using S = typename Derived::Scalar;
  const Vec3<S> v = w;
  const S t = v.dot(v);
  const Mat3<S> W = hat3(v);
  return Mat3<S>::Identity() + detail::one_minus_cos_over(t) * W +
         detail::th_minus_sin_over(t) * (W * W);
}

template <class Derived>
Mat3<typename Derived::Scalar> so3_right_jacobian(const Eigen::MatrixBase<Derived>& w) {
  const Vec3<typename Derived::Scalar> v = -w;
  return so3_left_jacobian(v);
}

template <class Derived>
Mat3<typename Derived::Scalar> so3_left_jacobian_inv(const Eigen::MatrixBase<Derived>& w) {
  using S = typename Derived::Scalar;
  const Vec3<S> v = w;
  const S t = v.dot(v);
  const Mat3<S> W = hat3(v);
  return Mat3<S>::Identity() - 0.5 * W + detail::jinv_coef(t) * (W * W);
}

template <class Derived>
Mat3<typename Derived::Scalar> so3_right_jacobian_inv(const Eigen::MatrixBase<Derived>& w) {
  const Vec3<typename Derived::Scalar> v = -w;
  return so3_left_jacobian_inv(v);
}

// Max-abs entry of R^T R - I.
template <class S>
double orthonormality_drift(const Mat3<S>& R) {
  Eigen::Matrix3d Rv;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) Rv(i, j) = value(R(i, j));
  return (Rv.transpose() * Rv - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
}

// Nearest orthonormal matrix (polar factor) by Newton-Schulz iteration; valid
// for inputs already close to SO(3).
template <class S>
Mat3<S> reorthonormalize(const Mat3<S>& R) {
  Mat3<S> X = R;
  for (int it = 0; it < 8 && orthonormality_drift(X) > 1e-15; ++it) {
    const Mat3<S> XtX = X.transpose() * X;
    X = X * (1.5 * Mat3<S>::Identity() - 0.5 * XtX);
  }
  return X;
}

inline bool is_rotation(const Eigen::Matrix3d& R, double tol = 1e-9) {
  return orthonormality_drift(R) <= tol && std::abs(R.determinant() - 1.0) <= tol;
}

// ---------------------------------------------------------------------------
// SE(3)

template <class S>
struct Se3Pose {
  Mat3<S> rot = Mat3<S>::Identity();
  Vec3<S> trans = Vec3<S>::Zero();

  static Se3Pose Identity() { return {}; }

  static Se3Pose FromMatrix(const Mat4<S>& m) {
    return {m.template topLeftCorner<3, 3>(), m.template topRightCorner<3, 1>()};
  }

  Mat4<S> matrix() const {
    Mat4<S> m = Mat4<S>::Identity();
    m.template topLeftCorner<3, 3>() = rot;
    m.template topRightCorner<3, 1>() = trans;
    return m;
  }

  Se3Pose inverse() const {
    const Mat3<S> rt = rot.transpose();
    return {rt, -(rt * trans)};
  }

  Se3Pose operator*(const Se3Pose& o) const { return {rot * o.rot, rot * o.trans + trans}; }

  Vec3<S> act(const Vec3<S>& p) const { return rot * p + trans; }

  template <class T>
  Se3Pose<T> cast() const {
    return {rot.template cast<T>(), trans.template cast<T>()};
  }
};

using Pose = Se3Pose<double>;

// Body twist; as a tangent vector it reads (lin, ang).
template <class S>
struct Twist {
  Vec3<S> ang = Vec3<S>::Zero();
  Vec3<S> lin = Vec3<S>::Zero();

  Vec6<S> tangent() const {
    Vec6<S> xi;
    xi << lin, ang;
    return xi;
  }
  template <class Derived>
  static Twist FromTangent(const Eigen::MatrixBase<Derived>& xi) {
    return {xi.template tail<3>(), xi.template head<3>()};
  }
};

template <class Derived>
Se3Pose<typename Derived::Scalar> exp_se3(const Eigen::MatrixBase<Derived>& xi) {
  using S = typename Derived::Scalar;
  const Vec3<S> rho = xi.template head<3>();
  const Vec3<S> phi = xi.template tail<3>();
  return {exp_so3(phi), so3_left_jacobian(phi) * rho};
}

template <class S>
Vec6<S> log_se3(const Se3Pose<S>& T, LogInfo* info = nullptr,
                NearPiPolicy policy = NearPiPolicy::Report) {
  const Vec3<S> phi = log_so3(T.rot, info, policy);
  Vec6<S> xi;
  xi << so3_left_jacobian_inv(phi) * T.trans, phi;
  return xi;
}

template <class S, class Derived>
Se3Pose<S> oplus(const Se3Pose<S>& T, const Eigen::MatrixBase<Derived>& d) {
  Se3Pose<S> out = T * exp_se3(d);
  if (orthonormality_drift(out.rot) > kReorthoTrigger) out.rot = reorthonormalize(out.rot);
  return out;
}

template <class S>
Vec6<S> ominus(const Se3Pose<S>& T2, const Se3Pose<S>& T1, LogInfo* info = nullptr,
               NearPiPolicy policy = NearPiPolicy::Report) {
  return log_se3(T1.inverse() * T2, info, policy);
}

// Adjoint acting on (lin, ang) tangents: Ad_T = [R, p^R; 0, R].
template <class S>
Mat6<S> adjoint(const Se3Pose<S>& T) {
  Mat6<S> ad = Mat6<S>::Zero();
  ad.template topLeftCorner<3, 3>() = T.rot;
  ad.template topRightCorner<3, 3>() = hat3(T.trans) * T.rot;
  ad.template bottomRightCorner<3, 3>() = T.rot;
  return ad;
}

// Coupling block of the SE(3) left Jacobian.
template <class S>
Mat3<S> se3_q_block(const Vec3<S>& rho, const Vec3<S>& phi) {
  const S t = phi.dot(phi);
  const Mat3<S> P = hat3(phi);
  const Mat3<S> Rh = hat3(rho);
  const Mat3<S> PR = P * Rh;
  const Mat3<S> RP = Rh * P;
  const Mat3<S> PRP = PR * P;
  const Mat3<S> PP = P * P;
  return 0.5 * Rh + detail::th_minus_sin_over(t) * (PR + RP + PRP) +
         detail::q_coef2(t) * (PP * Rh + Rh * PP - 3.0 * PRP) +
         detail::q_coef3(t) * (PRP * P + PP * RP);
}

template <class Derived>
Mat6<typename Derived::Scalar> jac_left_se3(const Eigen::MatrixBase<Derived>& xi) {
  using S = typename Derived::Scalar;
  const Vec3<S> rho = xi.template head<3>();
  const Vec3<S> phi = xi.template tail<3>();
  const Mat3<S> J = so3_left_jacobian(phi);
  Mat6<S> out = Mat6<S>::Zero();
  out.template topLeftCorner<3, 3>() = J;
  out.template bottomRightCorner<3, 3>() = J;
  out.template topRightCorner<3, 3>() = se3_q_block(rho, phi);
  return out;
}

template <class Derived>
Mat6<typename Derived::Scalar> jac_right_se3(const Eigen::MatrixBase<Derived>& xi) {
  const Vec6<typename Derived::Scalar> neg = -xi;
  return jac_left_se3(neg);
}

template <class Derived>
Mat6<typename Derived::Scalar> jac_left_se3_inv(const Eigen::MatrixBase<Derived>& xi) {
  using S = typename Derived::Scalar;
  const Vec3<S> rho = xi.template head<3>();
  const Vec3<S> phi = xi.template tail<3>();
  const Mat3<S> Ji = so3_left_jacobian_inv(phi);
  Mat6<S> out = Mat6<S>::Zero();
  out.template topLeftCorner<3, 3>() = Ji;
  out.template bottomRightCorner<3, 3>() = Ji;
  out.template topRightCorner<3, 3>() = -Ji * se3_q_block(rho, phi) * Ji;
  return out;
}

template <class Derived>
Mat6<typename Derived::Scalar> jac_right_se3_inv(const Eigen::MatrixBase<Derived>& xi) {
  const Vec6<typename Derived::Scalar> neg = -xi;
  return jac_left_se3_inv(neg);
}

// ---------------------------------------------------------------------------
// Roll-pitch-yaw, R = Rz(yaw) Ry(pitch) Rx(roll).

template <class S>
struct Rpy {
  S roll{0.0};
  S pitch{0.0};
  S yaw{0.0};

  Vec3<S> vector() const { return Vec3<S>(roll, pitch, yaw); }
  template <class Derived>
  static Rpy FromVector(const Eigen::MatrixBase<Derived>& v) {
    return {v(0), v(1), v(2)};
  }
};

template <class S>
Mat3<S> rpy_to_rot(const Rpy<S>& a) {
  using std::cos;
  using std::sin;
  const S cr = cos(a.roll), sr = sin(a.roll);
  const S cp = cos(a.pitch), sp = sin(a.pitch);
  const S cy = cos(a.yaw), sy = sin(a.yaw);
  Mat3<S> R;
  R << cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,
       sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,
       -sp, cp * sr, cp * cr;
  return R;
}

// Maps body angular velocity to roll-pitch-yaw rates.
template <class S>
Mat3<S> euler_rate_matrix(const Rpy<S>& a, double gimbal_guard = kDefaultGimbalGuard) {
  using std::cos;
  using std::sin;
  const S cp = cos(a.pitch);
  if (std::abs(value(cp)) <= gimbal_guard) {
    throw GimbalLock("euler_rate_matrix: pitch at +-pi/2");
  }
  const S sp = sin(a.pitch);
  const S cr = cos(a.roll), sr = sin(a.roll);
  const S tp = sp / cp;
  Mat3<S> W;
  W << S(1.0), sr * tp, cr * tp,
       S(0.0), cr, -sr,
       S(0.0), sr / cp, cr / cp;
  return W;
}

template <class S>
Rpy<S> rot_to_rpy(const Mat3<S>& R, double gimbal_guard = kDefaultGimbalGuard) {
  using std::atan2;
  using std::sqrt;
  const S cp = sqrt(R(2, 1) * R(2, 1) + R(2, 2) * R(2, 2));
  if (value(cp) <= gimbal_guard) throw GimbalLock("rot_to_rpy: pitch at +-pi/2");
  return {atan2(R(2, 1), R(2, 2)), atan2(-R(2, 0), cp), atan2(R(1, 0), R(0, 0))};
}

// ---------------------------------------------------------------------------
// Unit quaternions rho = (s, nu), Hamilton convention, body-to-world.

template <class S>
struct UnitQuat {
  S s{1.0};
  Vec3<S> nu = Vec3<S>::Zero();

  static UnitQuat Identity() { return {}; }

  Vec4<S> coeffs() const {
    Vec4<S> c;
    c << s, nu;
    return c;
  }
  // No normalization; use quat_normalize for that.
  template <class Derived>
  static UnitQuat FromCoeffs(const Eigen::MatrixBase<Derived>& c) {
    return {c(0), c.template tail<3>()};
  }
  UnitQuat operator-() const { return {-s, -nu}; }
};

template <class S>
UnitQuat<S> quat_multiply(const UnitQuat<S>& a, const UnitQuat<S>& b) {
  return {a.s * b.s - a.nu.dot(b.nu), a.s * b.nu + b.s * a.nu + a.nu.cross(b.nu)};
}

// L(rho): left-multiplication matrix.
template <class S>
Mat4<S> quat_left_matrix(const UnitQuat<S>& q) {
  Mat4<S> L;
  L(0, 0) = q.s;
  L.template block<1, 3>(0, 1) = -q.nu.transpose();
  L.template block<3, 1>(1, 0) = q.nu;
  L.template block<3, 3>(1, 1) = q.s * Mat3<S>::Identity() + hat3(q.nu);
  return L;
}

// rho_dot = 1/2 L(rho) H w_b.
template <class S, class Derived>
Vec4<S> quat_rate(const UnitQuat<S>& q, const Eigen::MatrixBase<Derived>& w_body) {
  Vec4<S> hw;
  hw << S(0.0), w_body;
  return 0.5 * (quat_left_matrix(q) * hw);
}

inline constexpr double kMinQuatNorm = 1e-12;

template <class Derived>
UnitQuat<typename Derived::Scalar> quat_normalize(const Eigen::MatrixBase<Derived>& c) {
  using S = typename Derived::Scalar;
  using std::sqrt;
  const Vec4<S> v = c;
  const S n = sqrt(v.dot(v));
  if (!(value(n) > kMinQuatNorm)) throw DegenerateQuaternion("quat_normalize: norm too small");
  return UnitQuat<S>::FromCoeffs(Vec4<S>(v / n));
}

// d(rho/|rho|)/d rho = (I - rho rho^T/|rho|^2)/|rho|.
inline Eigen::Matrix4d quat_normalize_jacobian(const Eigen::Vector4d& c) {
  const double n2 = c.squaredNorm();
  const double n = std::sqrt(n2);
  if (!(n > kMinQuatNorm)) throw DegenerateQuaternion("quat_normalize_jacobian: norm too small");
  return (Eigen::Matrix4d::Identity() - c * c.transpose() / n2) / n;
}

template <class S>
UnitQuat<S> quat_canonicalize(const UnitQuat<S>& q) {
  return value(q.s) >= 0.0 ? q : -q;
}

template <class S>
Mat3<S> quat_to_rot(const UnitQuat<S>& q) {
  return (q.s * q.s - q.nu.dot(q.nu)) * Mat3<S>::Identity() +
         2.0 * (q.nu * q.nu.transpose()) + (2.0 * q.s) * hat3(q.nu);
}

// Shepperd's method; canonical sign (s >= 0).
template <class S>
UnitQuat<S> rot_to_quat(const Mat3<S>& R) {
  using std::sqrt;
  const S tr = R.trace();
  const double d[4] = {value(tr), value(R(0, 0)), value(R(1, 1)), value(R(2, 2))};
  const int k = static_cast<int>(std::max_element(d, d + 4) - d);
  UnitQuat<S> q;
  if (k == 0) {
    const S r = sqrt(1.0 + tr);
    const S f = 0.5 / r;
    q.s = 0.5 * r;
    q.nu = Vec3<S>((R(2, 1) - R(1, 2)) * f, (R(0, 2) - R(2, 0)) * f, (R(1, 0) - R(0, 1)) * f);
  } else {
    const int i = k - 1, j = (i + 1) % 3, m = (i + 2) % 3;
    const S r = sqrt(1.0 + R(i, i) - R(j, j) - R(m, m));
    const S f = 0.5 / r;
    q.nu(i) = 0.5 * r;
    q.nu(j) = (R(j, i) + R(i, j)) * f;
    q.nu(m) = (R(m, i) + R(i, m)) * f;
    q.s = (R(m, j) - R(j, m)) * f;
  }
  return quat_canonicalize(q);
}

template <class S>
UnitQuat<S> rpy_to_quat(const Rpy<S>& a) {
  using std::cos;
  using std::sin;
  const UnitQuat<S> qx{cos(a.roll * 0.5), Vec3<S>(sin(a.roll * 0.5), S(0.0), S(0.0))};
  const UnitQuat<S> qy{cos(a.pitch * 0.5), Vec3<S>(S(0.0), sin(a.pitch * 0.5), S(0.0))};
  const UnitQuat<S> qz{cos(a.yaw * 0.5), Vec3<S>(S(0.0), S(0.0), sin(a.yaw * 0.5))};
  return quat_multiply(quat_multiply(qz, qy), qx);
}

template <class S>
Rpy<S> quat_to_rpy(const UnitQuat<S>& q, double gimbal_guard = kDefaultGimbalGuard) {
  return rot_to_rpy(quat_to_rot(q), gimbal_guard);
}

// Exp_q: translation and quaternion to a pose.
template <class S, class Derived>
Se3Pose<S> pose_from_parts(const Eigen::MatrixBase<Derived>& p, const UnitQuat<S>& q) {
  return {quat_to_rot(q), p};
}

template <class S>
struct PosQuat {
  Vec3<S> p = Vec3<S>::Zero();
  UnitQuat<S> q;
};

// Log_q: inverse of pose_from_parts, canonical quaternion sign.
template <class S>
PosQuat<S> parts_from_pose(const Se3Pose<S>& T) {
  return {T.trans, rot_to_quat(T.rot)};
}

}  // namespace fbopt::lie
