#pragma once

// Bound-constrained augmented Lagrangian with projected Levenberg-Marquardt
// inner steps. For multipliers y and penalty rho the inner merit is
//
//   Phi(x) = ||r(x)||^2 + rho/2 ||g(x) + y/rho - P(g(x) + y/rho)||^2
//
// with P the projection onto the row bounds; it is itself a sum of squares,
// so each inner step is a damped Gauss-Newton step restricted to the
// variables not pinned at a bound.

#include <Eigen/Core>

#include <iosfwd>
#include <string>
#include <string_view>

#include "fbopt/nlp.hpp"

namespace fbopt::solver {

struct SolverOptions {
  int max_iterations = 200;       // accepted inner steps
  double constraint_tol = 1e-6;   // max row/bound violation
  double optimality_tol = 1e-6;   // projected Lagrangian gradient, inf-norm
  double initial_penalty = 10.0;
  double penalty_growth = 10.0;
  double max_penalty = 1e12;
  double initial_damping = 1e-4;  // relative to diag of the Gauss-Newton matrix
  double accept_ratio = 1e-4;     // actual / predicted decrease
  int max_consecutive_rejections = 10;
  double divergence_norm = 1e9;
  bool verbose = false;  // per-iteration trace on stderr
};

enum class SolveStatus { Solved, MaxIterations, Diverged, EvaluationError };

std::string_view status_name(SolveStatus s);

struct SolveStats {
  SolveStatus status = SolveStatus::MaxIterations;
  int iterations = 0;
  long objective_evals = 0;
  long jacobian_evals = 0;
  double objective = 0.0;
  double violation = 0.0;  // inf-norm over rows and variable bounds
  double wall_time = 0.0;  // seconds
  std::string message;
};

struct SolveResult {
  Eigen::VectorXd x;
  Eigen::VectorXd multipliers;  // one per constraint row, L = f + y^T g
  SolveStats stats;
};

void validate(const SolverOptions& opts);

SolveResult solve(const nlp::NlpProblem& nlp, const Eigen::VectorXd& warmstart, const SolverOptions& opts = {});

struct KktResidual {
  double stationarity = 0.0;
  double feasibility = 0.0;
  double complementarity = 0.0;
};

// From fresh evaluations only.
KktResidual kkt_residual(const nlp::NlpProblem& nlp, const Eigen::VectorXd& x, const Eigen::VectorXd& multipliers);

// Line-oriented snapshot of the problem linearized at the warm start; see
// docs in README. Values are written as hex floats, so a reimport
// reproduces them bit for bit.
void export_problem(const nlp::NlpProblem& nlp, const Eigen::VectorXd& warmstart, std::ostream& out);
void export_problem(const nlp::NlpProblem& nlp, const Eigen::VectorXd& warmstart, const std::string& path);

struct ExportedProblem {
  int num_vars = 0;
  int num_rows = 0;
  Eigen::VectorXd x_lo, x_hi, row_lo, row_hi, warmstart;
  std::vector<std::string> row_kinds;
  double objective = 0.0;
  Eigen::VectorXd gradient;
  Eigen::VectorXd constraints;
  Eigen::SparseMatrix<double, Eigen::RowMajor> jacobian;

  // First-order model; exact at the warm start.
  Eigen::VectorXd constraints_at(const Eigen::VectorXd& x) const;
};

ExportedProblem import_problem(std::istream& in);
ExportedProblem import_problem_file(const std::string& path);

}  // namespace fbopt::solver
