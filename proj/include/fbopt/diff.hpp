#pragma once

// Jacobian drivers: forward-mode AD over Dual, central finite differences,
// and a small tape of SE(3) primitives whose Jacobians are chained through
// the right Lie Jacobians.

#include <Eigen/Core>

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fbopt/dual.hpp"
#include "fbopt/errors.hpp"
#include "fbopt/liegroups.hpp"

namespace fbopt::diff {

inline constexpr double kFdStep = 1e-6;

// Dense partials of a constraint block; cols are indices into the NLP
// variable vector, rows are relative to the block's first row.
struct JacobianBlock {
  int row_begin = 0;
  int rows = 0;
  std::vector<int> cols;
  Eigen::MatrixXd values;
};

// f: VecX<Dual> -> VecX<Dual>. Inputs wider than kMaxDerivatives are seeded
// in chunks.
template <class F>
Eigen::MatrixXd jacobian_ad(F&& f, const Eigen::VectorXd& x) {
  const int n = static_cast<int>(x.size());
  const int chunks = std::max(1, (n + kMaxDerivatives - 1) / kMaxDerivatives);
  Eigen::MatrixXd J;
  for (int chunk = 0; chunk < chunks; ++chunk) {
    const int begin = chunk * kMaxDerivatives;
    const int width = std::min(kMaxDerivatives, n - begin);
    lie::VecX<Dual> xd(n);
    for (int i = 0; i < n; ++i) {
      xd(i) = (i >= begin && i < begin + width) ? Dual::variable(x(i), i - begin, width) : Dual(x(i));
    }
    lie::VecX<Dual> y;
    try {
      y = f(xd);
    } catch (const GimbalLock& e) {
      throw NonDifferentiablePoint(e.what());
    } catch (const AngleNearPi& e) {
      throw NonDifferentiablePoint(e.what());
    }
    if (chunk == 0) J = Eigen::MatrixXd::Zero(y.size(), n);
    for (int r = 0; r < y.size(); ++r) {
      const DerivVector& d = y(r).d;
      for (int c = 0; c < d.size(); ++c) J(r, begin + c) = d(c);
    }
  }
  return J;
}

// Central differences, step `step` per coordinate.
template <class F>
Eigen::MatrixXd jacobian_fd(F&& f, const Eigen::VectorXd& x, double step = kFdStep) {
  const int n = static_cast<int>(x.size());
  Eigen::MatrixXd J;
  Eigen::VectorXd xp = x, xm = x;
  for (int i = 0; i < n; ++i) {
    xp(i) = x(i) + step;
    xm(i) = x(i) - step;
    const Eigen::VectorXd d = (f(xp) - f(xm)) / (2.0 * step);
    if (J.size() == 0) J.resize(d.size(), n);
    J.col(i) = d;
    xp(i) = xm(i) = x(i);
  }
  return J;
}

// ---------------------------------------------------------------------------
// SE(3) chain-rule tape.
//
// Pose-valued nodes carry right-perturbation Jacobians, T(x + dx) =
// T(x) Exp(J dx); tangent-valued nodes carry ordinary Jacobians.

enum class ChainKind { Tangent, Pose };

struct ChainValue {
  ChainKind kind = ChainKind::Tangent;
  Eigen::Matrix<double, 6, 1> xi = Eigen::Matrix<double, 6, 1>::Zero();
  lie::Pose pose;
  Eigen::Matrix<double, 6, Eigen::Dynamic> jac;
};

// A primitive computes its value and the 6x6 partials with respect to each
// argument.
struct ChainPrimitive {
  std::vector<ChainKind> args;
  ChainKind result = ChainKind::Tangent;
  std::function<void(const std::vector<const ChainValue*>& in, double param, ChainValue& out,
                     std::vector<Eigen::Matrix<double, 6, 6>>& partials)>
      eval;
};

class ChainRegistry {
 public:
  // Registers exp, log, inverse, compose, oplus, ominus, scale.
  static ChainRegistry with_defaults();

  void add(std::string name, ChainPrimitive p);
  bool contains(std::string_view name) const;
  const ChainPrimitive& get(std::string_view name) const;  // throws UnregisteredPrimitive

 private:
  std::map<std::string, ChainPrimitive, std::less<>> prims_;
};

class Se3Chain {
 public:
  explicit Se3Chain(ChainRegistry registry = ChainRegistry::with_defaults());

  // Six consecutive entries of x starting at offset, as a tangent.
  int input(int offset);
  int apply(std::string_view primitive, std::vector<int> args, double param = 0.0);

  int exp(int xi) { return apply("exp", {xi}); }
  int log(int T) { return apply("log", {T}); }
  int inverse(int T) { return apply("inverse", {T}); }
  int compose(int a, int b) { return apply("compose", {a, b}); }
  int oplus(int T, int d) { return apply("oplus", {T, d}); }
  int ominus(int T2, int T1) { return apply("ominus", {T2, T1}); }
  int scale(int xi, double s) { return apply("scale", {xi}, s); }

  struct Result {
    ChainValue value;
    Eigen::MatrixXd jacobian;
  };
  // Evaluates the tape at x and returns node `output` with its Jacobian.
  Result evaluate(const Eigen::VectorXd& x, int output) const;

 private:
  struct Node {
    int input_offset = -1;
    std::string prim;
    std::vector<int> args;
    double param = 0.0;
    ChainKind kind = ChainKind::Tangent;
  };
  ChainRegistry registry_;
  std::vector<Node> nodes_;
};

// Value and Jacobian of the output tangent node of a chain.
Eigen::MatrixXd jacobian_se3_chain(const Se3Chain& chain, int output, const Eigen::VectorXd& x);

// Se3Tangent integration residual r(xi_k, xi_k1, V) =
// Exp(xi_k1) (-) (Exp(xi_k) (+) V h), inputs packed (xi_k, xi_k1, V) with V
// ordered (lin, ang). Returns r and its 6x18 Jacobian.
struct Se3ResidualJacobian {
  Eigen::Matrix<double, 6, 1> residual;
  Eigen::Matrix<double, 6, 18> jacobian;
};
Se3ResidualJacobian se3_integration_residual(const Eigen::Matrix<double, 6, 1>& xi_k,
                                             const Eigen::Matrix<double, 6, 1>& xi_k1,
                                             const Eigen::Matrix<double, 6, 1>& V, double h);

// Exp(xi2) (-) Exp(xi1) and its 6x12 Jacobian in (xi1, xi2).
struct Se3DifferenceJacobian {
  Eigen::Matrix<double, 6, 1> value;
  Eigen::Matrix<double, 6, 12> jacobian;
};
Se3DifferenceJacobian se3_difference(const Eigen::Matrix<double, 6, 1>& xi1,
                                     const Eigen::Matrix<double, 6, 1>& xi2);

}  // namespace fbopt::diff
