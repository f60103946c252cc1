#pragma once

// Forward-mode dual numbers usable as an Eigen scalar.
//
// The derivative part lives in fixed-capacity storage so that evaluating a
// constraint block of up to kMaxDerivatives inputs never touches the heap.
// An empty derivative vector denotes a constant.

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <ostream>

namespace fbopt::diff {

inline constexpr int kMaxDerivatives = 64;

using DerivVector =
    Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDerivatives, 1>;

struct Dual {
  double v = 0.0;
  DerivVector d;

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: constants convert implicitly
  Dual(double value, const DerivVector& deriv) : v(value), d(deriv) {}

  // Seed input `index` of `count` independent variables.
  static Dual variable(double value, int index, int count) {
    Dual x(value);
    x.d = DerivVector::Zero(count);
    x.d[index] = 1.0;
    return x;
  }

  Dual& operator+=(const Dual& o);
  Dual& operator-=(const Dual& o);
  Dual& operator*=(const Dual& o);
  Dual& operator/=(const Dual& o);
};

namespace detail {

// ca*da + cb*db, treating empty vectors as zero.
inline DerivVector axpby(double ca, const DerivVector& da, double cb,
                         const DerivVector& db) {
  if (da.size() == 0) {
    if (db.size() == 0) return {};
    return cb * db;
  }
  if (db.size() == 0) return ca * da;
  return ca * da + cb * db;
}

inline DerivVector scale(double c, const DerivVector& d) {
  if (d.size() == 0) return {};
  return c * d;
}

// Derivative of a unary function with local slope `slope`.
inline Dual chain(double value, double slope, const Dual& x) {
  return Dual(value, scale(slope, x.d));
}

}  // namespace detail

inline Dual operator+(const Dual& a, const Dual& b) {
  return Dual(a.v + b.v, detail::axpby(1.0, a.d, 1.0, b.d));
}
inline Dual operator-(const Dual& a, const Dual& b) {
  return Dual(a.v - b.v, detail::axpby(1.0, a.d, -1.0, b.d));
}
inline Dual operator*(const Dual& a, const Dual& b) {
  return Dual(a.v * b.v, detail::axpby(b.v, a.d, a.v, b.d));
}
inline Dual operator/(const Dual& a, const Dual& b) {
  const double inv = 1.0 / b.v;
  return Dual(a.v * inv, detail::axpby(inv, a.d, -a.v * inv * inv, b.d));
}
inline Dual operator-(const Dual& a) { return Dual(-a.v, detail::scale(-1.0, a.d)); }
inline Dual operator+(const Dual& a) { return a; }

inline Dual operator+(const Dual& a, double b) { return Dual(a.v + b, a.d); }
inline Dual operator+(double a, const Dual& b) { return Dual(a + b.v, b.d); }
inline Dual operator-(const Dual& a, double b) { return Dual(a.v - b, a.d); }
inline Dual operator-(double a, const Dual& b) {
  return Dual(a - b.v, detail::scale(-1.0, b.d));
}
inline Dual operator*(const Dual& a, double b) { return Dual(a.v * b, detail::scale(b, a.d)); }
inline Dual operator*(double a, const Dual& b) { return Dual(a * b.v, detail::scale(a, b.d)); }
inline Dual operator/(const Dual& a, double b) {
  return Dual(a.v / b, detail::scale(1.0 / b, a.d));
}
inline Dual operator/(double a, const Dual& b) {
  const double inv = 1.0 / b.v;
  return Dual(a * inv, detail::scale(-a * inv * inv, b.d));
}

inline Dual& Dual::operator+=(const Dual& o) { return *this = *this + o; }
inline Dual& Dual::operator-=(const Dual& o) { return *this = *this - o; }
inline Dual& Dual::operator*=(const Dual& o) { return *this = *this * o; }
inline Dual& Dual::operator/=(const Dual& o) { return *this = *this / o; }

#define FBOPT_DUAL_COMPARE(op)                                                  \
  inline bool operator op(const Dual& a, const Dual& b) { return a.v op b.v; }  \
  inline bool operator op(const Dual& a, double b) { return a.v op b; }         \
  inline bool operator op(double a, const Dual& b) { return a op b.v; }
FBOPT_DUAL_COMPARE(<)
FBOPT_DUAL_COMPARE(<=)
FBOPT_DUAL_COMPARE(>)
FBOPT_DUAL_COMPARE(>=)
FBOPT_DUAL_COMPARE(==)
FBOPT_DUAL_COMPARE(!=)
#undef FBOPT_DUAL_COMPARE

inline Dual sin(const Dual& x) { return detail::chain(std::sin(x.v), std::cos(x.v), x); }
inline Dual cos(const Dual& x) { return detail::chain(std::cos(x.v), -std::sin(x.v), x); }
inline Dual tan(const Dual& x) {
  const double t = std::tan(x.v);
  return detail::chain(t, 1.0 + t * t, x);
}
inline Dual exp(const Dual& x) {
  const double e = std::exp(x.v);
  return detail::chain(e, e, x);
}
inline Dual log(const Dual& x) { return detail::chain(std::log(x.v), 1.0 / x.v, x); }

// sqrt(0) is given a zero slope so that a norm of an exactly vanishing
// quantity does not poison downstream derivatives with inf/nan.
inline Dual sqrt(const Dual& x) {
  const double r = std::sqrt(x.v);
  return detail::chain(r, r > 0.0 ? 0.5 / r : 0.0, x);
}
inline Dual abs(const Dual& x) { return x.v < 0.0 ? -x : x; }
inline Dual fabs(const Dual& x) { return abs(x); }
inline Dual asin(const Dual& x) {
  return detail::chain(std::asin(x.v), 1.0 / std::sqrt(1.0 - x.v * x.v), x);
}
inline Dual acos(const Dual& x) {
  return detail::chain(std::acos(x.v), -1.0 / std::sqrt(1.0 - x.v * x.v), x);
}
inline Dual atan(const Dual& x) { return detail::chain(std::atan(x.v), 1.0 / (1.0 + x.v * x.v), x); }
inline Dual atan2(const Dual& y, const Dual& x) {
  const double r2 = x.v * x.v + y.v * y.v;
  if (r2 == 0.0) return Dual(std::atan2(y.v, x.v));
  return Dual(std::atan2(y.v, x.v), detail::axpby(x.v / r2, y.d, -y.v / r2, x.d));
}
inline Dual pow(const Dual& x, double p) {
  const double r = std::pow(x.v, p);
  return detail::chain(r, p * std::pow(x.v, p - 1.0), x);
}
inline bool isfinite(const Dual& x) { return std::isfinite(x.v) && x.d.allFinite(); }

inline std::ostream& operator<<(std::ostream& os, const Dual& x) { return os << x.v; }

// Value extraction that works for plain and dual scalars.
inline double value(double x) { return x; }
inline double value(const Dual& x) { return x.v; }

}  // namespace fbopt::diff

namespace Eigen {

template <>
struct NumTraits<fbopt::diff::Dual> : NumTraits<double> {
  using Real = fbopt::diff::Dual;
  using NonInteger = fbopt::diff::Dual;
  using Nested = fbopt::diff::Dual;
  using Literal = double;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 1,
    AddCost = 8,
    MulCost = 8
  };
};

template <typename BinaryOp>
struct ScalarBinaryOpTraits<fbopt::diff::Dual, double, BinaryOp> {
  using ReturnType = fbopt::diff::Dual;
};
template <typename BinaryOp>
struct ScalarBinaryOpTraits<double, fbopt::diff::Dual, BinaryOp> {
  using ReturnType = fbopt::diff::Dual;
};

}  // namespace Eigen
