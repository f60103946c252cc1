// End-to-end acceptance run: one PASS/FAIL line per criterion, exit status 1
// if any fails. Takes several minutes (the noise sweep dominates).

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <sstream>
#include <string>

#include "fbopt/bench.hpp"
#include "fbopt/errors.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace fbopt {
namespace {

using charts::BaseCoords;
using charts::ChartKind;
using lie::Pose;
using lie::Twist;
using solver::SolveStatus;
using testing::Rng;
using Vec6d = Eigen::Matrix<double, 6, 1>;

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string task_path(const std::string& name) { return testing::source_path("data/tasks/" + name + ".json"); }

Verdict lie_groups() {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  Rng rng(101);
  double so3 = 0.0, se3 = 0.0, series = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Eigen::Vector3d w = rng.rotvec(M_PI - 1e-3);
    so3 = std::max(so3, (lie::log_so3(lie::exp_so3(w)) - w).cwiseAbs().maxCoeff());
    Vec6d xi;
    xi << rng.vec3(2.0), rng.rotvec(M_PI - 1e-3);
    se3 = std::max(se3, (lie::log_se3(lie::exp_se3(xi)) - xi).cwiseAbs().maxCoeff());
    if (i % 5 == 0) {
      series = std::max(series, (lie::exp_so3(w) - testing::series_exp3(w)).cwiseAbs().maxCoeff());
      series = std::max(series, (lie::exp_se3(xi).matrix() - testing::series_exp4(xi)).cwiseAbs().maxCoeff());
    }
  }
  const double t = seconds_since(t0);
  v.require(so3 <= 1e-9, "so3 roundtrip " + num(so3));
  v.require(se3 <= 1e-9, "se3 roundtrip " + num(se3));
  v.require(series <= 1e-12, "series " + num(series));
  v.require(t < 5.0, "runtime " + num(t) + " s");
  if (v.pass) v.detail = "roundtrip " + num(std::max(so3, se3)) + ", series " + num(series) + ", " + num(t) + " s";
  return v;
}

Verdict jacobians() {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  Rng rng(202);
  double worst = 0.0;
  auto track = [&](const std::string& name, double err) {
    if (err >= 1e-6) v.require(false, name + " " + num(err));
    worst = std::max(worst, err);
  };

  // Left/right SE(3) Jacobians against increments of the exponential.
  for (int i = 0; i < 100; ++i) {
    const Vec6d xi = rng.tangent(2.5, 1.5);
    const Eigen::MatrixXd fr = diff::jacobian_fd(
        [&](const Eigen::VectorXd& d) -> Eigen::VectorXd {
          return lie::log_se3(lie::exp_se3(xi).inverse() * lie::exp_se3(Vec6d(xi + d)));
        },
        Eigen::VectorXd::Zero(6));
    const Eigen::MatrixXd fl = diff::jacobian_fd(
        [&](const Eigen::VectorXd& d) -> Eigen::VectorXd {
          return lie::log_se3(lie::exp_se3(Vec6d(xi + d)) * lie::exp_se3(xi).inverse());
        },
        Eigen::VectorXd::Zero(6));
    track("jac_right_se3", testing::rel_err(lie::jac_right_se3(xi), fr));
    track("jac_left_se3", testing::rel_err(lie::jac_left_se3(xi), fl));
  }

  // Quaternion rate, normalization, chart residuals and the other AD paths.
  for (const testing::JacobianSample& s : testing::jacobian_inventory()) {
    for (int i = 0; i < 100; ++i) {
      const Eigen::VectorXd x = s.point(rng);
      track(s.name, testing::rel_err(diff::jacobian_ad(s.fd, x), diff::jacobian_fd(s.fv, x)));
    }
  }

  // Hand-derived SE(3) integration residual Jacobian.
  for (int i = 0; i < 100; ++i) {
    const Vec6d a = rng.tangent(2.5, 1.0), b = rng.tangent(2.5, 1.0), V = rng.tangent(3.0, 1.0);
    Eigen::VectorXd z(18);
    z << a, b, V;
    const auto f = [](const Eigen::VectorXd& y) -> Eigen::VectorXd {
      return diff::se3_integration_residual(y.head<6>(), y.segment<6>(6), y.tail<6>(), 0.05).residual;
    };
    track("se3_integration_residual",
          testing::rel_err(diff::se3_integration_residual(a, b, V, 0.05).jacobian, diff::jacobian_fd(f, z)));
  }

  // Contact Jacobians: columns are point-velocity directions, the base moving
  // through each chart.
  const rbd::RobotModel quad = rbd::load_model_file(testing::source_path("data/models/miniquad8.json"));
  for (ChartKind c : charts::kAllCharts) {
    for (int i = 0; i < 100; ++i) {
      const BaseCoords<double> x = charts::coords_from_pose(c, rng.pose(1.2, 1.0));
      const Eigen::VectorXd q = rng.vec(8, 2.0);
      const int f = i % 4;
      const Eigen::MatrixXd J = rbd::contact_jacobian(quad, charts::base_to_pose(x), q, f, 0);
      Eigen::MatrixXd fd(3, 14);
      for (int col = 0; col < 14; ++col) {
        const Eigen::VectorXd e = Eigen::VectorXd::Unit(14, col);
        auto moved = [&](double s) {
          const BaseCoords<double> xb = charts::base_integrate(c, x, Twist<double>::FromTangent(e.head<6>()), s);
          return rbd::point_position(quad, charts::base_to_pose(xb), Eigen::VectorXd(q + e.tail(8) * s), f, 0);
        };
        fd.col(col) = (moved(1e-6) - moved(-1e-6)) / 2e-6;
      }
      track("contact_jacobian", testing::rel_err(J, fd));
    }
  }
  const double t = seconds_since(t0);
  v.require(t < 30.0, "runtime " + num(t) + " s");
  if (v.pass) v.detail = "worst relative error " + num(worst) + ", " + num(t) + " s";
  return v;
}

Verdict dynamics() {
  Verdict v;
  Rng rng(303);
  const rbd::RobotModel pend = rbd::load_model_file(testing::source_path("data/models/double_pendulum.json"));
  const testing::Pendulum oracle;
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector2d q = rng.vec(2, M_PI), qd = rng.vec(2, 5.0), qdd = rng.vec(2, 20.0);
    const Eigen::VectorXd tau =
        rbd::inverse_dynamics(pend, Pose::Identity(), Eigen::VectorXd(q), Eigen::VectorXd(qd), Eigen::VectorXd(qdd));
    worst = std::max(worst, (tau - oracle.M(q) * qdd - oracle.bias(q, qd)).cwiseAbs().maxCoeff());
  }
  double ident = 0.0;
  for (const char* name : {"double_pendulum", "monoped3d", "miniquad8", "freeflyer_box"}) {
    const rbd::RobotModel m = rbd::load_model_file(testing::source_path(std::string("data/models/") + name + ".json"));
    for (int i = 0; i < 200; ++i) {
      const Pose T = m.floating_base ? rng.pose() : Pose::Identity();
      const Eigen::VectorXd q = rng.vec(m.num_joints(), 2.0), qd = rng.vec(m.nv(), 2.0), a = rng.vec(m.nv(), 5.0);
      const Eigen::VectorXd zero = Eigen::VectorXd::Zero(m.nv());
      const Eigen::VectorXd d = rbd::inverse_dynamics(m, T, q, qd, a) - rbd::inverse_dynamics(m, T, q, qd, zero);
      ident = std::max(ident, (d - rbd::mass_matrix(m, q) * a).cwiseAbs().maxCoeff());
    }
  }
  v.require(worst <= 1e-8, "Lagrangian oracle " + num(worst));
  v.require(ident <= 1e-9, "mass-matrix identity " + num(ident));
  if (v.pass) v.detail = "oracle " + num(worst) + ", identity " + num(ident);
  return v;
}

Verdict chart_consistency() {
  Verdict v;
  Rng rng(404);
  auto endpoints = [](const std::vector<Vec6d>& twists, const Pose& T0, double h) {
    std::vector<Pose> out;
    for (ChartKind c : charts::kAllCharts) {
      BaseCoords<double> x = charts::coords_from_pose(c, T0);
      for (const Vec6d& tw : twists) x = charts::base_integrate(c, x, Twist<double>::FromTangent(tw), h);
      out.push_back(charts::base_to_pose(x));
    }
    return out;
  };
  double worst_ratio = 1e300;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Vec6d> twists;
    for (int k = 0; k < 10; ++k) twists.push_back(rng.tangent(2.0, 1.0));
    const Pose T0 = lie::exp_se3(rng.tangent(0.5, 1.0));
    const auto coarse = endpoints(twists, T0, 0.02), fine = endpoints(twists, T0, 0.01);
    for (size_t a = 0; a < coarse.size(); ++a) {
      for (size_t b = a + 1; b < coarse.size(); ++b) {
        const double dc = lie::ominus(coarse[a], coarse[b]).norm(), df = lie::ominus(fine[a], fine[b]).norm();
        if (dc < 1e-12) continue;  // same integrator
        worst_ratio = std::min(worst_ratio, dc / df);
      }
    }
  }
  double exact = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Pose T0 = rng.pose(1.0);
    const Vec6d tw = rng.tangent(4.0, 2.0);
    const double h = rng.uniform(0.01, 0.2);
    const Pose target = T0 * lie::exp_se3(Vec6d(tw * h * 20));
    for (ChartKind c : {ChartKind::Se3Tangent, ChartKind::Quat2, ChartKind::Quat3}) {
      BaseCoords<double> x = charts::coords_from_pose(c, T0);
      for (int k = 0; k < 20; ++k) x = charts::base_integrate(c, x, Twist<double>::FromTangent(tw), h);
      exact = std::max(exact, testing::pose_dist(charts::base_to_pose(x), target));
    }
  }
  v.require(worst_ratio >= 3.5, "halving ratio " + num(worst_ratio));
  v.require(exact <= 1e-10, "constant twist " + num(exact));
  if (v.pass) v.detail = "min halving ratio " + num(worst_ratio) + ", constant twist " + num(exact);
  return v;
}

Verdict gimbal_and_double_cover() {
  Verdict v;
  Vec6d tw;
  tw << 0.5, 0, 0, 0, 1.0, 0;  // pitch-up through +pi/2
  for (ChartKind c : charts::kAllCharts) {
    BaseCoords<double> x = BaseCoords<double>::Zero(c);
    bool locked = false;
    try {
      for (int k = 0; k < 60; ++k) x = charts::base_integrate(c, x, Twist<double>::FromTangent(tw), 0.05);
    } catch (const GimbalLock&) {
      locked = true;
    }
    if (c == ChartKind::Rpy) {
      v.require(locked, "rpy did not raise GimbalLock");
    } else {
      v.require(!locked, std::string(charts::chart_name(c)) + " raised GimbalLock");
    }
  }
  Rng rng(505);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector3d p = rng.vec3(2.0);
    const Eigen::Vector4d q = rng.quat();
    const Twist<double> V = Twist<double>::FromTangent(rng.tangent(3.0, 1.0));
    BaseCoords<double> other{ChartKind::Quat3, Eigen::VectorXd(7)};
    other.data << rng.vec3(), rng.quat();
    for (ChartKind c : {ChartKind::Quat1, ChartKind::Quat2, ChartKind::Quat3}) {
      BaseCoords<double> a{c, Eigen::VectorXd(7)}, b{c, Eigen::VectorXd(7)};
      a.data << p, q;
      b.data << p, -q;
      const Pose Ta = charts::base_to_pose(a), Tb = charts::base_to_pose(b);
      worst = std::max(worst, testing::pose_dist(Ta, Tb));
      worst = std::max(worst, (charts::coords_from_pose(c, Ta).data - charts::coords_from_pose(c, Tb).data)
                                  .cwiseAbs()
                                  .maxCoeff());
      worst = std::max(worst, testing::pose_dist(charts::base_to_pose(charts::base_integrate(c, a, V, 0.05)),
                                                 charts::base_to_pose(charts::base_integrate(c, b, V, 0.05))));
    }
    BaseCoords<double> a{ChartKind::Quat3, Eigen::VectorXd(7)}, b = a;
    a.data << p, q;
    b.data << p, -q;
    worst = std::max(worst, (charts::base_difference(ChartKind::Quat3, a, other) -
                             charts::base_difference(ChartKind::Quat3, b, other))
                                .cwiseAbs()
                                .maxCoeff());
  }
  v.require(worst <= 1e-12, "sign flip changes results by " + num(worst));
  if (v.pass) v.detail = "rpy locks, others integrate; sign invariance " + num(worst);
  return v;
}

struct TaskRun {
  std::string task;
  ChartKind chart;
  SolveStatus status;
  bool feasible;
  double kkt;
  double defect;
};

// Every shipped task under every chart, checked independently (A6) and
// against the KKT conditions (A9).
std::vector<TaskRun> shipped_runs() {
  std::vector<TaskRun> out;
  for (const char* name : {"hop_forward", "walk_forward", "big_jump", "backflip", "sideflip"}) {
    const bench::TaskBundle b = bench::load_bundle("", task_path(name));
    for (ChartKind c : charts::kAllCharts) {
      const nlp::NlpProblem p = transcription::build_nlp(b.model, c, b.task);
      const Eigen::VectorXd ws =
          transcription::warmstart_with_hint(transcription::warmstart_neutral(*b.model, p, b.task), p, b.task);
      const solver::SolverOptions o;
      const solver::SolveResult r = solver::solve(p, ws, o);
      TaskRun run{name, c, r.stats.status, false, 0.0, 0.0};
      if (r.stats.status == SolveStatus::Solved) {
        const bench::FeasibilityReport f =
            bench::check_feasibility(*b.model, b.task, bench::make_trajectory(*b.model, b.task, p, r.x),
                                     10.0 * o.constraint_tol);
        run.feasible = f.feasible;
        run.defect = f.max();
        const solver::KktResidual k = solver::kkt_residual(p, r.x, r.multipliers);
        run.kkt = std::max(k.feasibility / o.constraint_tol,
                           std::max(k.stationarity, k.complementarity) / o.optimality_tol);
      }
      out.push_back(run);
    }
  }
  return out;
}

Verdict transcription_soundness(const std::vector<TaskRun>& runs) {
  Verdict v;
  int solved = 0;
  double worst = 0.0;
  for (const TaskRun& r : runs) {
    if (r.status != SolveStatus::Solved) continue;
    ++solved;
    worst = std::max(worst, r.defect);
    v.require(r.feasible, r.task + "/" + std::string(charts::chart_name(r.chart)) + " defect " + num(r.defect));
  }
  v.require(solved > 0, "nothing solved");
  if (v.pass) v.detail = std::to_string(solved) + " solved runs re-verified, worst defect " + num(worst);
  return v;
}

Verdict ordinal_reproduction() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  const bench::Suite suite = bench::load_suite(testing::source_path("data/suites/desk.json"));
  const std::vector<bench::RunReport> rows = bench::run_matrix(suite);
  double slowest = 0.0;
  std::string table;
  auto find = [&](const std::string& task, ChartKind c) -> const bench::RunReport* {
    for (const bench::RunReport& r : rows) {
      if (r.task == task && r.chart == c) return &r;
    }
    return nullptr;
  };
  for (const bench::RunReport& r : rows) {
    v.require(r.error.empty(), r.task + " error: " + r.error);
    slowest = std::max(slowest, r.stats.wall_time);
  }
  for (const char* task : {"hop_forward", "walk_forward"}) {
    for (ChartKind c : {ChartKind::Rpy, ChartKind::Quat1, ChartKind::Se3Tangent}) {
      const bench::RunReport* r = find(task, c);
      v.require(r && r->success == bench::Success::Yes,
                std::string(task) + "/" + std::string(charts::chart_name(c)) + " not Yes");
    }
  }
  for (const char* task : {"backflip", "sideflip"}) {
    const bench::RunReport* se3 = find(task, ChartKind::Se3Tangent);
    const bench::RunReport* rpy = find(task, ChartKind::Rpy);
    const bench::RunReport* q1 = find(task, ChartKind::Quat1);
    v.require(se3 && se3->success == bench::Success::Yes, std::string(task) + "/se3_tangent not Yes");
    v.require(rpy && (rpy->stats.status == SolveStatus::MaxIterations || rpy->stats.status == SolveStatus::Diverged),
              std::string(task) + "/rpy did not fail");
    v.require(q1 && (q1->stats.status != SolveStatus::Solved || q1->success == bench::Success::ConvergedWrongBehavior),
              std::string(task) + "/quat1 solved the flip");
    for (const bench::RunReport* r : {se3, rpy, q1}) {
      if (r) table += " " + std::string(task) + "/" + std::string(charts::chart_name(r->chart)) + "=" +
                      std::string(solver::status_name(r->stats.status));
    }
  }
  v.require(slowest < 60.0, "slowest solve " + num(slowest) + " s");
  if (v.pass) v.detail = std::to_string(rows.size()) + " runs in " + num(seconds_since(t0)) + " s;" + table;
  return v;
}

Verdict noise_robustness() {
  Verdict v;
  const bench::TaskBundle b = bench::load_bundle("", task_path("backflip"));
  bench::NoiseOptions o;
  o.charts = {ChartKind::Se3Tangent, ChartKind::Rpy};
  o.sigmas = {1e-6, 1e-3, 0.1, 0.5};
  o.replicates = 10;
  o.seed = 0;
  const auto first = bench::run_noise_study(b, o);
  o.workers = 2;
  const auto second = bench::run_noise_study(b, o);
  std::stringstream a, c;
  bench::write_noise_json(first, a);
  bench::write_noise_json(second, c);
  v.require(a.str() == c.str(), "reports differ between reruns");
  v.require(first.size() == 2 && first[0].runs.size() == 40 && first[1].runs.size() == 40, "wrong run count");
  std::string rates;
  for (size_t l = 0; l < o.sigmas.size(); ++l) {
    const bench::NoiseLevel& se3 = first[0].levels[l];
    const bench::NoiseLevel& rpy = first[1].levels[l];
    v.require(se3.successes >= rpy.successes, "sigma " + num(se3.sigma) + ": se3 " + std::to_string(se3.successes) +
                                                  " < rpy " + std::to_string(rpy.successes));
    rates += " " + num(se3.sigma) + ":" + std::to_string(se3.successes) + "/" + std::to_string(rpy.successes);
    const bool has_quartiles = se3.successes == 0 ? std::isnan(se3.q50) : (se3.q25 <= se3.q50 && se3.q50 <= se3.q75);
    v.require(has_quartiles, "quartiles malformed at sigma " + num(se3.sigma));
  }
  if (v.pass) v.detail = "solved se3/rpy of 10 per sigma:" + rates;
  return v;
}

Verdict solver_sanity(const std::vector<TaskRun>& runs) {
  Verdict v;
  // min ||x - c||^2 s.t. A x = b, with x* = c - A^T (A A^T)^-1 (A c - b).
  Eigen::MatrixXd A(2, 4);
  A << 1, 2, 0, -1,  //
      0, 1, 1, 1;
  const Eigen::Vector2d bb(1.0, -2.0);
  Eigen::VectorXd c(4);
  c << 0.5, -1.0, 2.0, 0.25;
  nlp::NlpProblem p;
  p.num_vars = 4;
  p.x_lo = Eigen::VectorXd::Constant(4, -std::numeric_limits<double>::infinity());
  p.x_hi = -p.x_lo;
  nlp::CostBlock cost;
  cost.rows = 4;
  cost.cols = {0, 1, 2, 3};
  cost.eval = [c](const Eigen::VectorXd& z) -> Eigen::VectorXd { return z - c; };
  cost.jac = [](const Eigen::VectorXd&) -> Eigen::MatrixXd { return Eigen::MatrixXd::Identity(4, 4); };
  nlp::add_cost(p, std::move(cost));
  nlp::ConstraintBlock row;
  row.cols = {0, 1, 2, 3};
  row.lo = row.hi = bb;
  row.eval = [A](const Eigen::VectorXd& z) -> Eigen::VectorXd { return A * z; };
  row.jac = [A](const Eigen::VectorXd&) -> Eigen::MatrixXd { return A; };
  nlp::add_constraint(p, std::move(row));
  const Eigen::VectorXd x_star = c - A.transpose() * (A * A.transpose()).ldlt().solve(A * c - bb);
  solver::SolverOptions tight;
  tight.constraint_tol = tight.optimality_tol = 1e-10;
  const solver::SolveResult r = solver::solve(p, Eigen::VectorXd::Zero(4), tight);
  const double qp = (r.x - x_star).cwiseAbs().maxCoeff();
  v.require(r.stats.status == SolveStatus::Solved && qp <= 1e-8, "QP error " + num(qp));

  double worst_kkt = 0.0;
  for (const TaskRun& t : runs) {
    if (t.status != SolveStatus::Solved) continue;
    worst_kkt = std::max(worst_kkt, t.kkt);
    v.require(t.kkt <= 10.0, t.task + "/" + std::string(charts::chart_name(t.chart)) + " KKT " + num(t.kkt) + "x tol");
  }

  const bench::TaskBundle b = bench::load_bundle("", task_path("backflip"));
  const nlp::NlpProblem fp = transcription::build_nlp(b.model, ChartKind::Se3Tangent, b.task);
  const Eigen::VectorXd ws =
      transcription::warmstart_with_hint(transcription::warmstart_neutral(*b.model, fp, b.task), fp, b.task);
  const solver::SolveResult r1 = solver::solve(fp, ws), r2 = solver::solve(fp, ws);
  const bool same = r1.x == r2.x && r1.multipliers == r2.multipliers && r1.stats.iterations == r2.stats.iterations &&
                    r1.stats.objective_evals == r2.stats.objective_evals &&
                    r1.stats.jacobian_evals == r2.stats.jacobian_evals && r1.stats.objective == r2.stats.objective &&
                    r1.stats.violation == r2.stats.violation;
  v.require(same, "reruns differ");
  if (v.pass) v.detail = "QP error " + num(qp) + ", worst KKT " + num(worst_kkt) + "x tol, reruns bit-identical";
  return v;
}

}  // namespace
}  // namespace fbopt

int main() {
  using namespace fbopt;
  bool all = true;
  auto report = [&](const char* id, const char* name, const std::function<Verdict()>& f) {
    Verdict v;
    try {
      v = f();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    all = all && v.pass;
    std::printf("%s %s  %s: %s\n", id, v.pass ? "PASS" : "FAIL", name, v.detail.c_str());
    std::fflush(stdout);
  };
  report("A1", "Lie-group correctness", lie_groups);
  report("A2", "Jacobian suite", jacobians);
  report("A3", "Dynamics oracle", dynamics);
  report("A4", "Chart consistency", chart_consistency);
  report("A5", "Gimbal lock and double cover", gimbal_and_double_cover);
  std::vector<TaskRun> runs;
  try {
    runs = shipped_runs();
  } catch (const std::exception& e) {
    std::printf("shipped task runs failed: %s\n", e.what());
  }
  report("A6", "Transcription soundness", [&] { return transcription_soundness(runs); });
  report("A7", "Ordinal reproduction", ordinal_reproduction);
  report("A8", "Noise robustness protocol", noise_robustness);
  report("A9", "Solver sanity", [&] { return solver_sanity(runs); });
  return all ? 0 : 1;
}
