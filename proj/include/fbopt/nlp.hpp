#pragma once

// Block-structured sparse NLP:
//
//   min  sum_c ||r_c(x)||^2   s.t.  g_lo <= g(x) <= g_hi,  x_lo <= x <= x_hi
//
// Every cost and constraint block reads a fixed list of variables and owns
// a dense local Jacobian over them. The objective is a sum of squared
// residuals, so a Gauss-Newton model of it is available to the solver.

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "fbopt/charts.hpp"
#include "fbopt/diff.hpp"

namespace fbopt::nlp {

enum class BlockKind {
  TorqueWindow,
  BaseIntegration,
  VelocityIntegration,
  JointIntegration,
  ContactPosition,
  ContactStationarity,
  Friction,
  QuatNorm,
  Goal,
  NetRotation,
  Generic,
};

std::string_view block_kind_name(BlockKind k);
BlockKind parse_block_kind(std::string_view name);

using LocalEval = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using LocalJac = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

struct ConstraintBlock {
  BlockKind kind = BlockKind::Generic;
  int node = -1;
  int row_begin = 0;
  std::vector<int> cols;
  Eigen::VectorXd lo, hi;
  LocalEval eval;
  LocalJac jac;

  int rows() const { return static_cast<int>(lo.size()); }
};

struct CostBlock {
  int node = -1;
  int row_begin = 0;  // into the stacked cost residual
  int rows = 0;
  std::vector<int> cols;
  LocalEval eval;
  LocalJac jac;
};

// Variable slots of one contact (frame, point) at one node.
struct ContactSlot {
  int frame = 0;
  int point = 0;
  int force = 0;     // 3 variables
  int position = 0;  // 3 variables
};

struct NodeSlots {
  int base = 0;
  int joints = 0;
  int vel = 0;
  int acc = 0;
  std::vector<ContactSlot> contacts;
};

// Where each trajectory quantity sits in x. Empty for hand-built problems.
struct VariableLayout {
  charts::ChartKind chart = charts::ChartKind::Se3Tangent;
  int base_dim = 0;
  int n_joints = 0;
  int nv = 0;
  std::vector<NodeSlots> nodes;
};

struct NlpProblem {
  int num_vars = 0;
  int num_rows = 0;
  int num_cost_rows = 0;
  Eigen::VectorXd x_lo, x_hi;
  std::vector<ConstraintBlock> constraints;
  std::vector<CostBlock> costs;
  VariableLayout layout;

  Eigen::VectorXd row_lo() const;
  Eigen::VectorXd row_hi() const;
  int jacobian_nonzeros() const;
};

// Append helpers; they fill row offsets and keep the counts consistent.
void add_constraint(NlpProblem& p, ConstraintBlock b);
void add_cost(NlpProblem& p, CostBlock b);

// Wrap a scalar-generic local function f(VecX<S>) -> VecX<S>; the Jacobian
// comes from forward-mode AD.
template <class F>
std::pair<LocalEval, LocalJac> ad_evaluators(F f) {
  LocalEval e = [f](const Eigen::VectorXd& z) -> Eigen::VectorXd { return f(z); };
  LocalJac j = [f](const Eigen::VectorXd& z) -> Eigen::MatrixXd {
    return diff::jacobian_ad([&f](const lie::VecX<diff::Dual>& zd) -> lie::VecX<diff::Dual> { return f(zd); }, z);
  };
  return {std::move(e), std::move(j)};
}

Eigen::VectorXd gather(const Eigen::VectorXd& x, const std::vector<int>& cols);

struct EvalCounters {
  long objective = 0;
  long jacobian = 0;
};

struct Evaluation {
  double objective = 0.0;
  Eigen::VectorXd cost_residual;
  Eigen::VectorXd constraints;
};

struct Derivatives {
  Eigen::SparseMatrix<double, Eigen::RowMajor> jacobian;       // constraints
  Eigen::SparseMatrix<double, Eigen::RowMajor> cost_jacobian;  // cost residual
  Eigen::VectorXd gradient;
};

// One call increments counters->objective (resp. ->jacobian) by exactly one.
Evaluation evaluate(const NlpProblem& p, const Eigen::VectorXd& x, EvalCounters* counters = nullptr);
Derivatives jacobians(const NlpProblem& p, const Eigen::VectorXd& x, EvalCounters* counters = nullptr);

// Max violation of the row bounds; with x also the variable bounds.
double row_violation(const NlpProblem& p, const Eigen::VectorXd& g);
double bound_violation(const NlpProblem& p, const Eigen::VectorXd& x);

}  // namespace fbopt::nlp
