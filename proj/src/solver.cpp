#include "fbopt/solver.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cassert>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "fbopt/errors.hpp"

namespace fbopt::solver {

using SpMat = Eigen::SparseMatrix<double>;
using RowSpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

std::string_view status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::Solved:
      return "Solved";
    case SolveStatus::MaxIterations:
      return "MaxIterations";
    case SolveStatus::Diverged:
      return "Diverged";
    case SolveStatus::EvaluationError:
      return "EvaluationError";
  }
  return "?";
}

void validate(const SolverOptions& o) {
  if (o.max_iterations < 1) throw ValidationError("max_iterations must be >= 1");
  if (!(o.constraint_tol > 0.0) || !(o.optimality_tol > 0.0)) throw ValidationError("tolerances must be positive");
  if (!(o.initial_penalty > 0.0) || !(o.penalty_growth > 1.0)) throw ValidationError("bad penalty parameters");
  if (!(o.initial_damping > 0.0)) throw ValidationError("initial damping must be positive");
}

namespace {

Eigen::VectorXd clamp(const Eigen::VectorXd& v, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return v.cwiseMax(lo).cwiseMin(hi);
}

// x - P(x - grad): zero exactly at first-order points of the bound problem.
double projected_gradient_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& grad, const Eigen::VectorXd& lo,
                               const Eigen::VectorXd& hi) {
  if (x.size() == 0) return 0.0;
  return (x - clamp(x - grad, lo, hi)).cwiseAbs().maxCoeff();
}

bool is_evaluation_failure(const Error& e) {
  return dynamic_cast<const GimbalLock*>(&e) || dynamic_cast<const NonDifferentiablePoint*>(&e) ||
         dynamic_cast<const AngleNearPi*>(&e) || dynamic_cast<const DegenerateQuaternion*>(&e);
}

struct Point {
  Eigen::VectorXd x;
  nlp::Evaluation ev;
};

class AugmentedLagrangian {
 public:
  AugmentedLagrangian(const nlp::NlpProblem& p, nlp::EvalCounters& counters)
      : p_(p), counters_(counters), lo_(p.row_lo()), hi_(p.row_hi()), y_(Eigen::VectorXd::Zero(p.num_rows)) {}

  Point evaluate(const Eigen::VectorXd& x) {
    Point pt{x, nlp::evaluate(p_, x, &counters_)};
    if (!std::isfinite(pt.ev.objective) || !pt.ev.constraints.allFinite()) {
      throw NonDifferentiablePoint("evaluation produced a non-finite value");
    }
    return pt;
  }

  // g + y/rho minus its projection onto the row bounds.
  Eigen::VectorXd shifted_violation(const Eigen::VectorXd& g) const {
    const Eigen::VectorXd t = g + y_ / rho_;
    return t - clamp(t, lo_, hi_);
  }

  // Rows whose shifted value sits outside its bounds (equalities always).
  Eigen::VectorXd active(const Eigen::VectorXd& g) const {
    const Eigen::VectorXd t = g + y_ / rho_;
    Eigen::VectorXd a(t.size());
    for (int i = 0; i < t.size(); ++i) a(i) = (lo_(i) == hi_(i) || t(i) < lo_(i) || t(i) > hi_(i)) ? 1.0 : 0.0;
    return a;
  }

  double merit(const Point& pt) const {
    return pt.ev.objective + 0.5 * rho_ * shifted_violation(pt.ev.constraints).squaredNorm();
  }

  // grad Phi = grad f + J^T (rho e) = grad of the Lagrangian at updated y.
  Eigen::VectorXd merit_gradient(const Point& pt, const nlp::Derivatives& d) const {
    return d.gradient + d.jacobian.transpose() * (rho_ * shifted_violation(pt.ev.constraints));
  }

  Eigen::VectorXd updated_multipliers(const Point& pt) const { return rho_ * shifted_violation(pt.ev.constraints); }

  double violation(const Point& pt) const { return nlp::row_violation(p_, pt.ev.constraints); }

  double& rho() { return rho_; }
  Eigen::VectorXd& y() { return y_; }

 private:
  const nlp::NlpProblem& p_;
  nlp::EvalCounters& counters_;
  Eigen::VectorXd lo_, hi_;
  Eigen::VectorXd y_;
  double rho_ = 10.0;
};

// Damped Gauss-Newton step on the free variables. Returns false if the
// factorization failed.
struct StepSystem {
  SpMat H;                    // Gauss-Newton matrix of Phi / 2
  Eigen::VectorXd rhs;        // -grad Phi / 2
  Eigen::VectorXd diag;       // Marquardt scaling
  std::vector<char> free;
  Eigen::SimplicialLDLT<SpMat> ldlt;

  void build(const nlp::Derivatives& d, const Eigen::VectorXd& active, double rho, const Eigen::VectorXd& grad,
             const Eigen::VectorXd& x, const Eigen::VectorXd& xlo, const Eigen::VectorXd& xhi) {
    const int n = static_cast<int>(x.size());
    RowSpMat Ja = d.jacobian;
    for (int r = 0; r < Ja.outerSize(); ++r) {
      for (RowSpMat::InnerIterator it(Ja, r); it; ++it) it.valueRef() *= active(r);
    }
    const SpMat Jc = Ja, Jf = d.cost_jacobian;
    H = SpMat(Jf.transpose() * Jf) + (0.5 * rho) * SpMat(Jc.transpose() * Jc);
    free.assign(n, 1);
    for (int i = 0; i < n; ++i) {
      if ((x(i) <= xlo(i) && grad(i) > 0.0) || (x(i) >= xhi(i) && grad(i) < 0.0)) free[i] = 0;
    }
    for (int c = 0; c < H.outerSize(); ++c) {
      for (SpMat::InnerIterator it(H, c); it; ++it) {
        if (!free[it.row()] || !free[it.col()]) it.valueRef() = 0.0;
      }
    }
    diag = H.diagonal();
    const double dmax = diag.size() ? diag.maxCoeff() : 1.0;
    for (int i = 0; i < n; ++i) diag(i) = std::max(diag(i), 1e-10 * dmax + 1e-12);
    rhs = -0.5 * grad;
    for (int i = 0; i < n; ++i) {
      if (!free[i]) rhs(i) = 0.0;
    }
    ldlt.analyzePattern(with_damping(1.0));
  }

  SpMat with_damping(double mu) const {
    SpMat D(H.rows(), H.cols());
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(H.rows());
    for (int i = 0; i < H.rows(); ++i) t.emplace_back(i, i, free[i] ? mu * diag(i) : 1.0);
    D.setFromTriplets(t.begin(), t.end());
    return H + D;
  }

  bool solve(double mu, Eigen::VectorXd& step) {
    ldlt.factorize(with_damping(mu));
    if (ldlt.info() != Eigen::Success) return false;
    step = ldlt.solve(rhs);
    return step.allFinite();
  }
};

}  // namespace

SolveResult solve(const nlp::NlpProblem& p, const Eigen::VectorXd& warmstart, const SolverOptions& opts) {
  validate(opts);
  if (warmstart.size() != p.num_vars) throw DimensionError("warm start does not match the layout");
  const auto t0 = std::chrono::steady_clock::now();

  SolveResult out;
  nlp::EvalCounters counters;
  AugmentedLagrangian al(p, counters);
  al.rho() = opts.initial_penalty;

  auto finish = [&](SolveStatus status, const Point* pt, std::string msg) {
    out.stats.status = status;
    out.stats.message = std::move(msg);
    if (pt) {
      out.x = pt->x;
      out.stats.objective = pt->ev.objective;
      out.stats.violation = std::max(al.violation(*pt), nlp::bound_violation(p, pt->x));
      out.multipliers = al.updated_multipliers(*pt);
    }
    out.stats.objective_evals = counters.objective;
    out.stats.jacobian_evals = counters.jacobian;
    out.stats.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
  };

  Point cur;
  nlp::Derivatives der;
  try {
    cur = al.evaluate(clamp(warmstart, p.x_lo, p.x_hi));
    der = nlp::jacobians(p, cur.x, &counters);
  } catch (const Error& e) {
    if (!is_evaluation_failure(e)) throw;
    out.x = clamp(warmstart, p.x_lo, p.x_hi);
    out.multipliers = Eigen::VectorXd::Zero(p.num_rows);
    out.stats.violation = std::numeric_limits<double>::infinity();
    return finish(SolveStatus::EvaluationError, nullptr, e.what());
  }

  double mu = opts.initial_damping, nu = 2.0;
  double omega = 1e-2;  // inner stationarity target, tightened per outer pass
  double last_violation = al.violation(cur);
  int rejections = 0;

  for (int outer = 0; outer < 100; ++outer) {
    // Inner projected Levenberg-Marquardt on Phi for fixed (y, rho).
    double phi = al.merit(cur);
    StepSystem sys;
    bool rebuild = true;
    for (;;) {
      const Eigen::VectorXd grad = al.merit_gradient(cur, der);
      const double stat = projected_gradient_norm(cur.x, grad, p.x_lo, p.x_hi);
      const double viol = al.violation(cur);
      if (viol <= opts.constraint_tol && stat <= opts.optimality_tol) {
        return finish(SolveStatus::Solved, &cur, "converged");
      }
      if (stat <= std::max(omega, opts.optimality_tol)) break;
      if (out.stats.iterations >= opts.max_iterations) {
        return finish(SolveStatus::MaxIterations, &cur, "iteration limit");
      }
      if (rebuild) {
        sys.build(der, al.active(cur.ev.constraints), al.rho(), grad, cur.x, p.x_lo, p.x_hi);
        rebuild = false;
      }

      Eigen::VectorXd step;
      double step_norm = 0.0, dx_norm = 0.0, ratio_seen = 0.0;
      bool accepted = false;
      std::string failure;
      if (sys.solve(mu, step)) {
        const Eigen::VectorXd xt = clamp(cur.x + step, p.x_lo, p.x_hi);
        const Eigen::VectorXd dx = xt - cur.x;
        step_norm = step.norm();
        dx_norm = dx.norm();
        // Predicted decrease of the Gauss-Newton model over the projected step.
        const Eigen::VectorXd e = al.shifted_violation(cur.ev.constraints);
        const Eigen::VectorXd act = al.active(cur.ev.constraints);
        const Eigen::VectorXd Jdx = (der.jacobian * dx).cwiseProduct(act);
        const Eigen::VectorXd Jfdx = der.cost_jacobian * dx;
        const double pred = -(2.0 * cur.ev.cost_residual.dot(Jfdx) + Jfdx.squaredNorm()) -
                            0.5 * al.rho() * (2.0 * e.dot(Jdx) + Jdx.squaredNorm());
        if (pred > 0.0) {
          try {
            Point trial = al.evaluate(xt);
            const double phi_t = al.merit(trial);
            const double ratio = (phi - phi_t) / pred;
            ratio_seen = ratio;
            // Below roundoff in phi the ratio is noise; judge by the gradient instead.
            const bool noise = pred <= 1e-12 * std::abs(phi) && phi_t <= phi + 1e-13 * std::abs(phi);
            bool take = ratio >= opts.accept_ratio, by_gradient = false;
            nlp::Derivatives dt;
            if (!take && noise) {
              dt = nlp::jacobians(p, trial.x, &counters);
              take = by_gradient =
                  projected_gradient_norm(trial.x, al.merit_gradient(trial, dt), p.x_lo, p.x_hi) < stat;
            }
            if (take) {
              der = by_gradient ? std::move(dt) : nlp::jacobians(p, trial.x, &counters);
              cur = std::move(trial);
              phi = phi_t;
              accepted = true;
              if (!by_gradient) mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * ratio - 1.0, 3));
              mu = std::max(mu, 1e-12);
              nu = 2.0;
            }
          } catch (const Error& err) {
            if (!is_evaluation_failure(err)) throw;
            failure = err.what();
          }
        } else if (stat <= 10.0 * opts.optimality_tol && dx.cwiseAbs().maxCoeff() <= 1e-14) {
          break;  // nothing left to gain at this precision
        }
      }
      if (opts.verbose) {
        std::fprintf(stderr, "%4d %c phi %.6e viol %.3e stat %.3e mu %.2e rho %.1e |p| %.2e |dx| %.2e ratio %.3f\n",
                     out.stats.iterations, accepted ? '+' : '-', phi, al.violation(cur), stat, mu, al.rho(), step_norm,
                     dx_norm, ratio_seen);
      }
      if (accepted) {
        ++out.stats.iterations;
        rejections = 0;
        rebuild = true;
        if (cur.x.cwiseAbs().maxCoeff() > opts.divergence_norm) {
          return finish(SolveStatus::Diverged, &cur, "variable norm exceeded the divergence bound");
        }
      } else {
        mu *= nu;
        nu *= 2.0;
        if (++rejections >= opts.max_consecutive_rejections) {
          return finish(SolveStatus::Diverged, &cur,
                        failure.empty() ? "merit did not decrease over consecutive trials"
                                        : "trial evaluations failed: " + failure);
        }
      }
    }

    // Outer update.
    const double viol = al.violation(cur);
    al.y() = al.updated_multipliers(cur).cwiseMax(-1e12).cwiseMin(1e12);
    if (viol > 0.25 * last_violation) al.rho() = std::min(al.rho() * opts.penalty_growth, opts.max_penalty);
    last_violation = viol;
    omega = std::max(0.1 * omega, opts.optimality_tol);
  }
  return finish(SolveStatus::MaxIterations, &cur, "outer iteration limit");
}

KktResidual kkt_residual(const nlp::NlpProblem& p, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != p.num_vars || y.size() != p.num_rows) throw DimensionError("kkt_residual: size mismatch");
  const nlp::Evaluation ev = nlp::evaluate(p, x);
  const nlp::Derivatives d = nlp::jacobians(p, x);
  KktResidual r;
  r.feasibility = std::max(nlp::row_violation(p, ev.constraints), nlp::bound_violation(p, x));

  const Eigen::VectorXd grad = d.gradient + d.jacobian.transpose() * y;
  for (int i = 0; i < p.num_vars; ++i) {
    const double tol = 1e-12 * std::max(1.0, std::abs(x(i)));
    const bool at_lo = x(i) <= p.x_lo(i) + tol, at_hi = x(i) >= p.x_hi(i) - tol;
    double gi = grad(i);
    if (at_lo && gi > 0.0) gi = 0.0;  // absorbed by a bound multiplier
    if (at_hi && gi < 0.0) gi = 0.0;
    r.stationarity = std::max(r.stationarity, std::abs(gi));
  }

  const Eigen::VectorXd lo = p.row_lo(), hi = p.row_hi();
  for (int i = 0; i < p.num_rows; ++i) {
    if (y(i) == 0.0) continue;
    const double bound = y(i) > 0.0 ? hi(i) : lo(i);
    const double c = std::isfinite(bound) ? std::abs(y(i)) * std::abs(ev.constraints(i) - bound) : std::abs(y(i));
    r.complementarity = std::max(r.complementarity, c);
  }
  return r;
}

}  // namespace fbopt::solver
