#include "fbopt/nlp.hpp"

#include <algorithm>
#include <array>

#include "fbopt/errors.hpp"

namespace fbopt::nlp {

namespace {

constexpr std::array<std::string_view, 11> kKindNames = {
    "torque_window", "base_integration",    "velocity_integration", "joint_integration",
    "contact_position", "contact_stationarity", "friction", "quat_norm",
    "goal",          "net_rotation",        "generic"};

}  // namespace

std::string_view block_kind_name(BlockKind k) { return kKindNames[static_cast<int>(k)]; }

BlockKind parse_block_kind(std::string_view name) {
  for (size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<BlockKind>(i);
  }
  throw ParseError("unknown constraint kind '" + std::string(name) + "'");
}

Eigen::VectorXd NlpProblem::row_lo() const {
  Eigen::VectorXd lo(num_rows);
  for (const ConstraintBlock& b : constraints) lo.segment(b.row_begin, b.rows()) = b.lo;
  return lo;
}

Eigen::VectorXd NlpProblem::row_hi() const {
  Eigen::VectorXd hi(num_rows);
  for (const ConstraintBlock& b : constraints) hi.segment(b.row_begin, b.rows()) = b.hi;
  return hi;
}

int NlpProblem::jacobian_nonzeros() const {
  int nnz = 0;
  for (const ConstraintBlock& b : constraints) nnz += b.rows() * static_cast<int>(b.cols.size());
  return nnz;
}

void add_constraint(NlpProblem& p, ConstraintBlock b) {
  if (b.lo.size() != b.hi.size()) throw DimensionError("constraint bounds differ in length");
  for (int i = 0; i < b.lo.size(); ++i) {
    if (!(b.lo(i) <= b.hi(i))) throw DimensionError("constraint row has lo > hi");
  }
  for (int c : b.cols) {
    if (c < 0 || c >= p.num_vars) throw DimensionError("constraint reads a variable outside the layout");
  }
  b.row_begin = p.num_rows;
  p.num_rows += b.rows();
  p.constraints.push_back(std::move(b));
}

void add_cost(NlpProblem& p, CostBlock b) {
  for (int c : b.cols) {
    if (c < 0 || c >= p.num_vars) throw DimensionError("cost reads a variable outside the layout");
  }
  b.row_begin = p.num_cost_rows;
  p.num_cost_rows += b.rows;
  p.costs.push_back(std::move(b));
}

Eigen::VectorXd gather(const Eigen::VectorXd& x, const std::vector<int>& cols) {
  Eigen::VectorXd z(cols.size());
  for (size_t i = 0; i < cols.size(); ++i) z(i) = x(cols[i]);
  return z;
}

Evaluation evaluate(const NlpProblem& p, const Eigen::VectorXd& x, EvalCounters* counters) {
  if (x.size() != p.num_vars) throw DimensionError("evaluate: x does not match the layout");
  if (counters) ++counters->objective;
  Evaluation out;
  out.cost_residual.resize(p.num_cost_rows);
  for (const CostBlock& c : p.costs) {
    const Eigen::VectorXd r = c.eval(gather(x, c.cols));
    if (r.size() != c.rows) throw DimensionError("cost block returned the wrong row count");
    out.cost_residual.segment(c.row_begin, c.rows) = r;
  }
  out.objective = out.cost_residual.squaredNorm();
  out.constraints.resize(p.num_rows);
  for (const ConstraintBlock& b : p.constraints) {
    const Eigen::VectorXd g = b.eval(gather(x, b.cols));
    if (g.size() != b.rows()) throw DimensionError("constraint block returned the wrong row count");
    out.constraints.segment(b.row_begin, b.rows()) = g;
  }
  return out;
}

namespace {

void scatter(std::vector<Eigen::Triplet<double>>& t, int row_begin, const std::vector<int>& cols,
             const Eigen::MatrixXd& J) {
  for (int r = 0; r < J.rows(); ++r) {
    for (int c = 0; c < J.cols(); ++c) t.emplace_back(row_begin + r, cols[c], J(r, c));
  }
}

}  // namespace

Derivatives jacobians(const NlpProblem& p, const Eigen::VectorXd& x, EvalCounters* counters) {
  if (x.size() != p.num_vars) throw DimensionError("jacobians: x does not match the layout");
  if (counters) ++counters->jacobian;
  Derivatives d;

  // Explicit zeros are kept so the pattern equals the declared sparsity.
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(p.jacobian_nonzeros());
  for (const ConstraintBlock& b : p.constraints) {
    const Eigen::MatrixXd J = b.jac(gather(x, b.cols));
    if (J.rows() != b.rows() || J.cols() != static_cast<int>(b.cols.size())) {
      throw DimensionError("constraint Jacobian has the wrong shape");
    }
    scatter(t, b.row_begin, b.cols, J);
  }
  d.jacobian.resize(p.num_rows, p.num_vars);
  d.jacobian.setFromTriplets(t.begin(), t.end());

  t.clear();
  Eigen::VectorXd r(p.num_cost_rows);
  for (const CostBlock& c : p.costs) {
    const Eigen::VectorXd z = gather(x, c.cols);
    const Eigen::MatrixXd J = c.jac(z);
    if (J.rows() != c.rows || J.cols() != static_cast<int>(c.cols.size())) {
      throw DimensionError("cost Jacobian has the wrong shape");
    }
    r.segment(c.row_begin, c.rows) = c.eval(z);
    scatter(t, c.row_begin, c.cols, J);
  }
  d.cost_jacobian.resize(p.num_cost_rows, p.num_vars);
  d.cost_jacobian.setFromTriplets(t.begin(), t.end());
  d.gradient = 2.0 * (d.cost_jacobian.transpose() * r);
  return d;
}

double row_violation(const NlpProblem& p, const Eigen::VectorXd& g) {
  double v = 0.0;
  for (const ConstraintBlock& b : p.constraints) {
    for (int i = 0; i < b.rows(); ++i) {
      const double gi = g(b.row_begin + i);
      v = std::max({v, b.lo(i) - gi, gi - b.hi(i)});
    }
  }
  return v;
}

double bound_violation(const NlpProblem& p, const Eigen::VectorXd& x) {
  double v = 0.0;
  for (int i = 0; i < p.num_vars; ++i) v = std::max({v, p.x_lo(i) - x(i), x(i) - p.x_hi(i)});
  return v;
}

}  // namespace fbopt::nlp
