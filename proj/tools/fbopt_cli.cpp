// fbopt: run single tasks, task-by-chart matrices and warm-start noise sweeps.
//
// Exit status is 0 iff every requested solve ran to completion, whatever its
// outcome; input and I/O errors give 1.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "fbopt/bench.hpp"
#include "fbopt/errors.hpp"

namespace {

using namespace fbopt;
namespace fs = std::filesystem;

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  return f;
}

void print_report(const bench::RunReport& r) {
  std::cout << r.task << " " << charts::chart_name(r.chart) << ": " << solver::status_name(r.stats.status)
            << " iterations " << r.stats.iterations << " objective " << r.stats.objective << " obj_evals "
            << r.stats.objective_evals << " jac_evals " << r.stats.jacobian_evals << " violation "
            << r.stats.violation << " time " << r.stats.wall_time << "s success " << bench::success_name(r.success)
            << " net_rotation " << r.achievement.net_rotation << " position_error " << r.achievement.position_error
            << "\n";
}

std::vector<charts::ChartKind> parse_charts(const std::vector<std::string>& names) {
  std::vector<charts::ChartKind> out;
  for (const std::string& n : names) out.push_back(charts::parse_chart(n));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Floating-base trajectory optimization benchmarks"};
  app.require_subcommand(1);

  std::string model, task, chart = "se3_tangent", traj_out, nlp_out;
  int max_iter = 0;
  double tol = 0.0;
  bool verbose = false;
  auto* run = app.add_subcommand("run-task", "solve one task under one chart");
  run->add_option("--model", model, "model file (default: the one named by the task)");
  run->add_option("--task", task, "task file")->required();
  run->add_option("--chart", chart, "se3_tangent, quat1, quat2, quat3 or rpy");
  run->add_option("--max-iter", max_iter, "iteration limit");
  run->add_option("--tol", tol, "constraint and optimality tolerance");
  run->add_option("--export-traj", traj_out, "write the trajectory here");
  run->add_option("--export-nlp", nlp_out, "write the problem linearized at the warm start here");
  run->add_flag("--verbose", verbose, "solver trace on stderr");

  std::string suite, out_dir;
  int workers = 0;
  auto* matrix = app.add_subcommand("run-matrix", "solve every task/chart pair of a suite");
  matrix->add_option("--suite", suite, "suite file")->required();
  matrix->add_option("--out", out_dir, "output directory")->required();
  matrix->add_option("--workers", workers, "parallel solves (default: from the suite)");

  std::vector<std::string> chart_list;
  std::vector<double> sigmas = {1e-6, 1e-3, 0.1, 0.5};
  int replicates = 10;
  unsigned long long seed = 0;
  auto* noise = app.add_subcommand("run-noise", "warm-start noise sweep");
  noise->add_option("--model", model, "model file (default: the one named by the task)");
  noise->add_option("--task", task, "task file")->required();
  noise->add_option("--charts", chart_list, "comma-separated chart names")->delimiter(',')->required();
  noise->add_option("--sigmas", sigmas, "comma-separated noise levels")->delimiter(',');
  noise->add_option("--replicates", replicates, "runs per noise level");
  noise->add_option("--seed", seed, "replicate r uses seed + r");
  noise->add_option("--out", out_dir, "output directory")->required();
  noise->add_option("--workers", workers, "parallel solves");

  std::string traj_in;
  double check_tol = 1e-5;
  auto* check = app.add_subcommand("check-traj", "re-verify a trajectory file without the solver");
  check->add_option("--model", model, "model file (default: the one named by the task)");
  check->add_option("--task", task, "task file")->required();
  check->add_option("--traj", traj_in, "trajectory file")->required();
  check->add_option("--tol", check_tol, "feasibility tolerance");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      bench::RunOptions o;
      if (max_iter > 0) o.solver.max_iterations = max_iter;
      if (tol > 0.0) o.solver.constraint_tol = o.solver.optimality_tol = tol;
      o.solver.verbose = verbose;
      o.trajectory_path = traj_out;
      if (!nlp_out.empty()) {
        const bench::TaskBundle b = bench::load_bundle(model, task);
        const nlp::NlpProblem p = transcription::build_nlp(b.model, charts::parse_chart(chart), b.task);
        const Eigen::VectorXd ws =
            transcription::warmstart_with_hint(transcription::warmstart_neutral(*b.model, p, b.task), p, b.task);
        solver::export_problem(p, ws, nlp_out);
      }
      print_report(bench::run_task(model, task, charts::parse_chart(chart), o));
      return 0;
    }
    if (*matrix) {
      bench::Suite s = bench::load_suite(suite);
      if (workers > 0) s.workers = workers;
      const std::vector<bench::RunReport> rows = bench::run_matrix(s);
      fs::create_directories(out_dir);
      auto csv = open_out(fs::path(out_dir) / "matrix.csv");
      bench::write_matrix_csv(rows, csv);
      auto js = open_out(fs::path(out_dir) / "matrix.json");
      bench::write_matrix_json(rows, js);
      bool all = true;
      for (const bench::RunReport& r : rows) {
        if (r.error.empty()) {
          print_report(r);
        } else {
          all = false;
          std::cerr << r.task << " " << charts::chart_name(r.chart) << ": error: " << r.error << "\n";
        }
      }
      return all ? 0 : 1;
    }
    if (*noise) {
      bench::NoiseOptions o;
      o.charts = parse_charts(chart_list);
      o.sigmas = sigmas;
      o.replicates = replicates;
      o.seed = seed;
      o.workers = workers > 0 ? workers : 1;
      const bench::TaskBundle b = bench::load_bundle(model, task);
      const auto reports = bench::run_noise_study(b, o);
      fs::create_directories(out_dir);
      auto runs = open_out(fs::path(out_dir) / "noise_runs.csv");
      bench::write_noise_runs_csv(reports, runs);
      auto summary = open_out(fs::path(out_dir) / "noise_summary.csv");
      bench::write_noise_summary_csv(reports, summary);
      auto js = open_out(fs::path(out_dir) / "noise.json");
      bench::write_noise_json(reports, js);
      for (const auto& r : reports) {
        auto plot = open_out(fs::path(out_dir) / ("plot_" + std::string(charts::chart_name(r.chart)) + ".dat"));
        bench::write_noise_plot(r, plot);
        for (const auto& l : r.levels) {
          std::cout << r.task << " " << charts::chart_name(r.chart) << " sigma " << l.sigma << ": " << l.successes
                    << "/" << l.replicates << " solved, iterations q25/q50/q75 " << l.q25 << "/" << l.q50 << "/"
                    << l.q75 << "\n";
        }
      }
      return 0;
    }
    if (*check) {
      const bench::TaskBundle b = bench::load_bundle(model, task);
      const bench::Trajectory t = bench::import_trajectory(traj_in);
      const bench::FeasibilityReport f = bench::check_feasibility(*b.model, b.task, t, check_tol);
      const bench::Achievement a = bench::check_achievement(b.task, t);
      std::cout << "feasible " << (f.feasible ? "yes" : "no") << " (torque " << f.torque << ", integration "
                << f.integration << ", contact " << f.contact << ", friction " << f.friction << ", bounds "
                << f.bounds << (f.worst.empty() ? "" : "; worst: " + f.worst) << ")\n"
                << "achieved " << (a.achieved ? "yes" : "no") << " net_rotation " << a.net_rotation
                << " position_error " << a.position_error << "\n";
      return 0;
    }
  } catch (const fbopt::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
