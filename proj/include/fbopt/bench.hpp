#pragma once

// Experiment harness: single runs, chart-by-task matrices, warm-start noise
// sweeps, trajectory files and an independent solution checker.

#include <Eigen/Core>

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fbopt/rbd.hpp"
#include "fbopt/solver.hpp"
#include "fbopt/transcription.hpp"

namespace fbopt::bench {

using charts::ChartKind;

enum class Success { Yes, No, ConvergedWrongBehavior };

std::string_view success_name(Success s);

// ---- trajectories ----------------------------------------------------------

struct ContactRecord {
  bool active = false;
  Eigen::Vector3d force = Eigen::Vector3d::Zero();
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
};

struct TrajectoryNode {
  double time = 0.0;
  lie::Pose pose;
  Eigen::VectorXd base;  // chart coordinates
  Eigen::VectorXd joints, vel, acc;
  std::vector<ContactRecord> contacts;  // one per Trajectory::contact_names entry
};

struct Trajectory {
  std::string task;
  ChartKind chart = ChartKind::Se3Tangent;
  double h = 0.0;
  int base_dim = 0, n_joints = 0, nv = 0;
  // "frame:point" for every contact point scheduled anywhere in the task.
  std::vector<std::string> contact_names;
  std::vector<TrajectoryNode> nodes;
};

Trajectory make_trajectory(const rbd::RobotModel& model, const transcription::TaskSpec& task,
                           const nlp::NlpProblem& nlp, const Eigen::VectorXd& x);
// Inverse of make_trajectory for the same problem layout.
Eigen::VectorXd trajectory_to_x(const Trajectory& traj, const rbd::RobotModel& model, const nlp::NlpProblem& nlp);

void write_trajectory(const Trajectory& traj, std::ostream& out);
void export_trajectory(const Trajectory& traj, const std::string& path);
Trajectory read_trajectory(std::istream& in);
Trajectory import_trajectory(const std::string& path);

// ---- independent checks ------------------------------------------------------

// Recomputes physics and kinematics from the trajectory records alone.
struct FeasibilityReport {
  double torque = 0.0;       // base rows and joint torque limits
  double integration = 0.0;  // base, velocity and joint steps
  double contact = 0.0;      // point positions and stationarity
  double friction = 0.0;
  double bounds = 0.0;  // joint, velocity and region limits
  bool feasible = false;
  std::string worst;  // description of the largest defect

  double max() const;
};

FeasibilityReport check_feasibility(const rbd::RobotModel& model, const transcription::TaskSpec& task,
                                    const Trajectory& traj, double tol);

struct Achievement {
  double net_rotation = 0.0;    // rad about the task axis, 0 without a rotation goal
  double position_error = 0.0;  // m, 0 without a position goal
  bool achieved = false;
};

Achievement check_achievement(const transcription::TaskSpec& task, const Trajectory& traj);

Success classify(solver::SolveStatus status, bool feasible, bool achieved);

// ---- runs --------------------------------------------------------------------

struct RunOptions {
  solver::SolverOptions solver;
  double check_factor = 10.0;   // checker tolerance = factor * constraint_tol
  std::string trajectory_path;  // written when non-empty
};

struct RunReport {
  std::string task;
  std::string model;
  ChartKind chart = ChartKind::Se3Tangent;
  solver::SolveStats stats;
  Success success = Success::No;
  bool feasible = false;  // independent checker verdict
  Achievement achievement;
  std::string error;  // set when the run could not be carried out
};

// A task file with its model, loaded once.
struct TaskBundle {
  std::string task_path;
  std::string model_path;
  transcription::TaskSpec task;
  std::shared_ptr<const rbd::RobotModel> model;
};

// The model path overrides the one named by the task when non-empty.
TaskBundle load_bundle(const std::string& model_path, const std::string& task_path);

RunReport run_task(const TaskBundle& bundle, ChartKind chart, const RunOptions& opts);
RunReport run_task(const std::string& model_path, const std::string& task_path, ChartKind chart,
                   const RunOptions& opts);

struct SuiteEntry {
  std::string model;  // may be empty: use the task's own model
  std::string task;
  std::vector<ChartKind> charts;
};

struct Suite {
  std::vector<SuiteEntry> entries;
  solver::SolverOptions solver;
  int workers = 1;
};

// Paths inside the suite are resolved against the suite file's directory.
Suite load_suite(const std::string& path);

// Rows in suite order (entry, then chart). Failed rows carry `error`.
std::vector<RunReport> run_matrix(const Suite& suite);

void write_matrix_csv(const std::vector<RunReport>& rows, std::ostream& out);
void write_matrix_json(const std::vector<RunReport>& rows, std::ostream& out);

// ---- noise study -------------------------------------------------------------

struct NoiseRun {
  ChartKind chart = ChartKind::Se3Tangent;
  double sigma = 0.0;
  int replicate = 0;
  unsigned long long seed = 0;
  solver::SolveStats stats;
};

struct NoiseLevel {
  double sigma = 0.0;
  int successes = 0;  // status Solved
  int replicates = 0;
  // Over solved runs only; NaN when none solved.
  double q25 = 0.0, q50 = 0.0, q75 = 0.0;
};

struct NoiseStudyReport {
  std::string task;
  ChartKind chart = ChartKind::Se3Tangent;
  int replicates = 0;
  std::vector<NoiseLevel> levels;
  std::vector<NoiseRun> runs;  // sigma-major, then replicate
};

struct NoiseOptions {
  std::vector<ChartKind> charts;
  std::vector<double> sigmas = {1e-6, 1e-3, 0.1, 0.5};
  int replicates = 10;
  unsigned long long seed = 0;
  solver::SolverOptions solver;
  int workers = 1;
};

std::vector<NoiseStudyReport> run_noise_study(const TaskBundle& bundle, const NoiseOptions& opts);

// Linear interpolation between closest ranks: position (n - 1) p in the
// sorted sample. Requires a non-empty sample.
double quantile(std::vector<double> sample, double p);

void write_noise_runs_csv(const std::vector<NoiseStudyReport>& reports, std::ostream& out);
void write_noise_summary_csv(const std::vector<NoiseStudyReport>& reports, std::ostream& out);
void write_noise_json(const std::vector<NoiseStudyReport>& reports, std::ostream& out);
// Plot series: one "sigma q25 q50 q75" line per level.
void write_noise_plot(const NoiseStudyReport& report, std::ostream& out);

// Runs fn(0..count-1) on up to `workers` threads.
void parallel_for(int count, int workers, const std::function<void(int)>& fn);

}  // namespace fbopt::bench
