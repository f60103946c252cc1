#include "fbopt/bench.hpp"

#include <Eigen/Geometry>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "fbopt/errors.hpp"

namespace fbopt::bench {

using json = nlohmann::json;
using charts::chart_name;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string contact_name(const rbd::RobotModel& model, int frame, int point) {
  return model.frame(frame).name + ":" + std::to_string(point);
}

}  // namespace

std::string_view success_name(Success s) {
  switch (s) {
    case Success::Yes:
      return "Yes";
    case Success::No:
      return "No";
    case Success::ConvergedWrongBehavior:
      return "ConvergedWrongBehavior";
  }
  return "?";
}

// ---- trajectories ----------------------------------------------------------

Trajectory make_trajectory(const rbd::RobotModel& model, const transcription::TaskSpec& task,
                           const nlp::NlpProblem& nlp, const Eigen::VectorXd& x) {
  const nlp::VariableLayout& L = nlp.layout;
  if (L.nodes.empty()) throw ValidationError("make_trajectory: problem has no trajectory layout");
  if (x.size() != nlp.num_vars) throw DimensionError("make_trajectory: solution does not match the layout");
  Trajectory t;
  t.task = task.name;
  t.chart = L.chart;
  t.h = task.h;
  t.base_dim = L.base_dim;
  t.n_joints = L.n_joints;
  t.nv = L.nv;

  std::vector<std::pair<int, int>> refs;
  for (const nlp::NodeSlots& s : L.nodes) {
    for (const nlp::ContactSlot& c : s.contacts) refs.emplace_back(c.frame, c.point);
  }
  std::sort(refs.begin(), refs.end());
  refs.erase(std::unique(refs.begin(), refs.end()), refs.end());
  for (const auto& [f, p] : refs) t.contact_names.push_back(contact_name(model, f, p));

  for (size_t k = 0; k < L.nodes.size(); ++k) {
    const nlp::NodeSlots& s = L.nodes[k];
    TrajectoryNode n;
    n.time = static_cast<double>(k) * task.h;
    n.base = x.segment(s.base, L.base_dim);
    n.pose = L.base_dim > 0 ? charts::base_to_pose(charts::BaseCoords<double>{L.chart, n.base}) : lie::Pose{};
    n.joints = x.segment(s.joints, L.n_joints);
    n.vel = x.segment(s.vel, L.nv);
    n.acc = x.segment(s.acc, L.nv);
    n.contacts.resize(refs.size());
    for (const nlp::ContactSlot& c : s.contacts) {
      const size_t i = std::lower_bound(refs.begin(), refs.end(), std::make_pair(c.frame, c.point)) - refs.begin();
      n.contacts[i] = {true, x.segment<3>(c.force), x.segment<3>(c.position)};
    }
    t.nodes.push_back(std::move(n));
  }
  return t;
}

Eigen::VectorXd trajectory_to_x(const Trajectory& traj, const rbd::RobotModel& model, const nlp::NlpProblem& nlp) {
  const nlp::VariableLayout& L = nlp.layout;
  if (traj.nodes.size() != L.nodes.size() || traj.chart != L.chart || traj.base_dim != L.base_dim ||
      traj.n_joints != L.n_joints || traj.nv != L.nv) {
    throw DimensionError("trajectory does not match the problem layout");
  }
  Eigen::VectorXd x = Eigen::VectorXd::Zero(nlp.num_vars);
  for (size_t k = 0; k < L.nodes.size(); ++k) {
    const nlp::NodeSlots& s = L.nodes[k];
    const TrajectoryNode& n = traj.nodes[k];
    x.segment(s.base, L.base_dim) = n.base;
    x.segment(s.joints, L.n_joints) = n.joints;
    x.segment(s.vel, L.nv) = n.vel;
    x.segment(s.acc, L.nv) = n.acc;
    for (const nlp::ContactSlot& c : s.contacts) {
      const std::string name = contact_name(model, c.frame, c.point);
      const auto it = std::find(traj.contact_names.begin(), traj.contact_names.end(), name);
      if (it == traj.contact_names.end()) throw ValidationError("trajectory lacks contact " + name);
      const ContactRecord& r = n.contacts[it - traj.contact_names.begin()];
      if (!r.active) throw ScheduleError("contact " + name + " inactive in the trajectory at node " + std::to_string(k));
      x.segment<3>(c.force) = r.force;
      x.segment<3>(c.position) = r.position;
    }
  }
  return x;
}

void write_trajectory(const Trajectory& t, std::ostream& out) {
  out << "# fbopt-trajectory 1\n";
  out << "# task " << t.task << "\n";
  out << "# chart " << chart_name(t.chart) << "\n";
  out << "# timestep " << fmt(t.h) << "\n";
  out << "# dims " << t.base_dim << " " << t.n_joints << " " << t.nv << "\n";
  out << "# nodes " << t.nodes.size() << "\n";
  out << "# contacts " << t.contact_names.size();
  for (const std::string& c : t.contact_names) out << " " << c;
  out << "\n# columns t";
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) out << " R" << i << j;
  }
  out << " px py pz";
  for (int i = 0; i < t.base_dim; ++i) out << " b" << i;
  for (int i = 0; i < t.n_joints; ++i) out << " q" << i;
  for (int i = 0; i < t.nv; ++i) out << " v" << i;
  for (int i = 0; i < t.nv; ++i) out << " a" << i;
  for (const std::string& c : t.contact_names) {
    for (const char* f : {".on", ".fx", ".fy", ".fz", ".cx", ".cy", ".cz"}) out << " " << c << f;
  }
  out << "\n";
  for (const TrajectoryNode& n : t.nodes) {
    out << fmt(n.time);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) out << " " << fmt(n.pose.rot(i, j));
    }
    for (int i = 0; i < 3; ++i) out << " " << fmt(n.pose.trans(i));
    for (const Eigen::VectorXd* v : {&n.base, &n.joints, &n.vel, &n.acc}) {
      for (int i = 0; i < v->size(); ++i) out << " " << fmt((*v)(i));
    }
    for (const ContactRecord& c : n.contacts) {
      out << " " << (c.active ? 1 : 0);
      for (int i = 0; i < 3; ++i) out << " " << fmt(c.force(i));
      for (int i = 0; i < 3; ++i) out << " " << fmt(c.position(i));
    }
    out << "\n";
  }
}

void export_trajectory(const Trajectory& traj, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  write_trajectory(traj, f);
  if (!f) throw IoError("write failed: " + path);
}

Trajectory read_trajectory(std::istream& in) {
  Trajectory t;
  std::string line;
  if (!std::getline(in, line) || line != "# fbopt-trajectory 1") throw ParseError("not a version 1 trajectory file");
  int nodes = -1;
  bool have_columns = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (line[0] == '#') {
      std::string hash, key;
      ls >> hash >> key;
      if (key == "task") {
        ls >> t.task;
      } else if (key == "chart") {
        std::string c;
        ls >> c;
        t.chart = charts::parse_chart(c);
      } else if (key == "timestep") {
        std::string v;
        ls >> v;
        try {
          t.h = std::stod(v);
        } catch (const std::exception&) {
          throw ParseError("bad timestep in trajectory: " + v);
        }
      } else if (key == "dims") {
        ls >> t.base_dim >> t.n_joints >> t.nv;
      } else if (key == "nodes") {
        ls >> nodes;
      } else if (key == "contacts") {
        size_t count = 0;
        ls >> count;
        t.contact_names.resize(count);
        for (std::string& c : t.contact_names) ls >> c;
      } else if (key == "columns") {
        have_columns = true;
      }
      if (!ls && key != "columns") throw ParseError("malformed trajectory header: " + line);
      continue;
    }
    if (!have_columns) throw ParseError("trajectory data before the header");
    std::vector<double> v;
    std::string tok;
    while (ls >> tok) {
      try {
        v.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw ParseError("bad number in trajectory: " + tok);
      }
    }
    const size_t expect = 13 + t.base_dim + t.n_joints + 2 * t.nv + 7 * t.contact_names.size();
    if (v.size() != expect) throw ParseError("trajectory row has " + std::to_string(v.size()) + " columns");
    TrajectoryNode n;
    size_t i = 0;
    n.time = v[i++];
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) n.pose.rot(r, c) = v[i++];
    }
    for (int r = 0; r < 3; ++r) n.pose.trans(r) = v[i++];
    auto take = [&](int count) {
      Eigen::VectorXd out(count);
      for (int j = 0; j < count; ++j) out(j) = v[i++];
      return out;
    };
    n.base = take(t.base_dim);
    n.joints = take(t.n_joints);
    n.vel = take(t.nv);
    n.acc = take(t.nv);
    for (size_t c = 0; c < t.contact_names.size(); ++c) {
      ContactRecord r;
      r.active = v[i++] != 0.0;
      r.force = take(3);
      r.position = take(3);
      n.contacts.push_back(r);
    }
    t.nodes.push_back(std::move(n));
  }
  if (nodes < 0 || static_cast<int>(t.nodes.size()) != nodes) throw ParseError("trajectory node count mismatch");
  return t;
}

Trajectory import_trajectory(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  return read_trajectory(f);
}

// ---- independent checks ------------------------------------------------------

double FeasibilityReport::max() const { return std::max({torque, integration, contact, friction, bounds}); }

FeasibilityReport check_feasibility(const rbd::RobotModel& model, const transcription::TaskSpec& task,
                                    const Trajectory& traj, double tol) {
  FeasibilityReport rep;
  double worst = 0.0;
  auto note = [&](double& slot, double defect, const std::string& what, size_t k) {
    if (!(defect <= slot)) slot = std::isnan(defect) ? std::numeric_limits<double>::infinity() : defect;
    if (!(defect <= worst)) {
      worst = std::isnan(defect) ? std::numeric_limits<double>::infinity() : defect;
      rep.worst = what + " at node " + std::to_string(k);
    }
  };
  auto outside = [](double v, double lo, double hi) { return std::max({lo - v, v - hi, 0.0}); };

  const int n = model.num_joints(), off = model.base_offset();
  if (traj.n_joints != n || traj.nv != model.nv()) throw DimensionError("trajectory does not match the model");
  const double h = traj.h;
  const double mu = task.friction / std::sqrt(2.0);

  // Contact records by (frame, point) of the model.
  std::vector<std::pair<int, int>> refs;
  for (const std::string& name : traj.contact_names) {
    const size_t colon = name.rfind(':');
    if (colon == std::string::npos) throw ParseError("bad contact name " + name);
    refs.emplace_back(model.frame_index(name.substr(0, colon)), std::stoi(name.substr(colon + 1)));
  }

  for (size_t k = 0; k < traj.nodes.size(); ++k) {
    const TrajectoryNode& s = traj.nodes[k];
    std::vector<rbd::ContactForce<double>> forces;
    for (size_t c = 0; c < refs.size(); ++c) {
      if (s.contacts[c].active) forces.push_back({refs[c].first, refs[c].second, s.contacts[c].force});
    }
    const Eigen::VectorXd tau = rbd::inverse_dynamics(model, s.pose, s.joints, s.vel, s.acc, forces);
    for (int i = 0; i < off; ++i) note(rep.torque, std::abs(tau(i)), "base wrench row " + std::to_string(i), k);
    for (int j = 0; j < n; ++j) {
      const rbd::Joint& jt = model.joints[j];
      note(rep.torque, outside(tau(off + j), jt.tau_min, jt.tau_max), "torque limit of " + jt.name, k);
      note(rep.bounds, outside(s.joints(j), jt.q_min, jt.q_max), "position limit of " + jt.name, k);
      note(rep.bounds, outside(s.vel(off + j), -jt.v_max, jt.v_max), "velocity limit of " + jt.name, k);
    }

    for (size_t c = 0; c < refs.size(); ++c) {
      const ContactRecord& r = s.contacts[c];
      if (!r.active) continue;
      const auto [frame, point] = refs[c];
      const std::string& name = traj.contact_names[c];
      const Eigen::Vector3d p = rbd::point_position(model, s.pose, s.joints, frame, point);
      note(rep.contact, (p - r.position).cwiseAbs().maxCoeff(), "position of " + name, k);
      const bool touchdown = k == 0 ? false : !traj.nodes[k - 1].contacts[c].active;
      if (!touchdown) {
        const Eigen::Vector3d pv = rbd::point_velocity(model, s.pose, s.joints, s.vel, frame, point);
        note(rep.contact, pv.cwiseAbs().maxCoeff(), "velocity of " + name, k);
      }
      const Eigen::Vector3d& f = r.force;
      note(rep.friction, std::max(0.0, -f.z()), "normal force of " + name, k);
      note(rep.friction, std::max(0.0, std::abs(f.x()) - mu * f.z()), "friction x of " + name, k);
      note(rep.friction, std::max(0.0, std::abs(f.y()) - mu * f.z()), "friction y of " + name, k);
      const auto box = task.regions.find(model.frame(frame).name);
      if (box != task.regions.end()) {
        for (int i = 0; i < 3; ++i) {
          note(rep.bounds, outside(r.position(i), box->second.min(i), box->second.max(i)), "region of " + name, k);
        }
      }
    }

    if (k + 1 == traj.nodes.size()) continue;
    const TrajectoryNode& s1 = traj.nodes[k + 1];
    note(rep.integration, (s1.vel - s.vel - h * s.acc).cwiseAbs().maxCoeff(), "velocity step", k);
    if (n > 0) {
      note(rep.integration, (s1.joints - s.joints - h * s1.vel.tail(n)).cwiseAbs().maxCoeff(), "joint step", k);
    }
    if (traj.base_dim > 0) {
      const charts::BaseCoords<double> x0{traj.chart, s.base}, x1{traj.chart, s1.base};
      double defect = std::numeric_limits<double>::infinity();
      try {
        defect = charts::residual_integration(traj.chart, x0, x1, lie::Twist<double>::FromTangent(s1.vel.head<6>()), h)
                     .cwiseAbs()
                     .maxCoeff();
      } catch (const Error&) {
        // singular chart step; counts as infinitely infeasible
      }
      note(rep.integration, defect, "base step", k);
    }
  }
  rep.feasible = rep.max() <= tol;
  return rep;
}

Achievement check_achievement(const transcription::TaskSpec& task, const Trajectory& traj) {
  Achievement a;
  a.achieved = !traj.nodes.empty();
  if (traj.nodes.empty()) return a;
  if (task.goal.net_rotation) {
    const Eigen::Vector3d axis = task.goal.net_rotation->axis.normalized();
    double total = 0.0;
    for (size_t k = 0; k + 1 < traj.nodes.size(); ++k) {
      const Eigen::Matrix3d& R0 = traj.nodes[k].pose.rot;
      const Eigen::AngleAxisd step(R0.transpose() * traj.nodes[k + 1].pose.rot);
      total += axis.dot(R0 * step.axis()) * step.angle();
    }
    a.net_rotation = total;
    a.achieved =
        a.achieved && std::abs(total - task.goal.net_rotation->angle) <= task.achieve_rotation_tolerance;
  }
  if (task.goal.position) {
    a.position_error = (traj.nodes.back().pose.trans - *task.goal.position).norm();
    a.achieved = a.achieved && a.position_error <= task.achieve_position_tolerance;
  }
  return a;
}

Success classify(solver::SolveStatus status, bool feasible, bool achieved) {
  if (status != solver::SolveStatus::Solved || !feasible) return Success::No;
  return achieved ? Success::Yes : Success::ConvergedWrongBehavior;
}

// ---- runs --------------------------------------------------------------------

TaskBundle load_bundle(const std::string& model_path, const std::string& task_path) {
  TaskBundle b;
  b.task_path = task_path;
  b.task = transcription::load_task_file(task_path);
  b.model_path = model_path.empty() ? transcription::resolve_model_path(task_path, b.task) : model_path;
  b.model = std::make_shared<const rbd::RobotModel>(rbd::load_model_file(b.model_path));
  transcription::validate_task(*b.model, b.task);
  return b;
}

RunReport run_task(const TaskBundle& b, ChartKind chart, const RunOptions& opts) {
  RunReport rep;
  rep.task = b.task.name;
  rep.model = b.model->name;
  rep.chart = chart;
  const nlp::NlpProblem p = transcription::build_nlp(b.model, chart, b.task);
  const Eigen::VectorXd ws =
      transcription::warmstart_with_hint(transcription::warmstart_neutral(*b.model, p, b.task), p, b.task);
  const solver::SolveResult r = solver::solve(p, ws, opts.solver);
  rep.stats = r.stats;
  const Trajectory traj = make_trajectory(*b.model, b.task, p, r.x);
  if (r.stats.status == solver::SolveStatus::Solved) {
    rep.feasible = check_feasibility(*b.model, b.task, traj, opts.check_factor * opts.solver.constraint_tol).feasible;
  }
  rep.achievement = check_achievement(b.task, traj);
  rep.success = classify(r.stats.status, rep.feasible, rep.achievement.achieved);
  if (!opts.trajectory_path.empty()) export_trajectory(traj, opts.trajectory_path);
  return rep;
}

RunReport run_task(const std::string& model_path, const std::string& task_path, ChartKind chart,
                   const RunOptions& opts) {
  return run_task(load_bundle(model_path, task_path), chart, opts);
}

namespace {

solver::SolverOptions solver_options_from(const json& j) {
  solver::SolverOptions o;
  if (j.is_null()) return o;
  o.max_iterations = j.value("max_iterations", o.max_iterations);
  o.constraint_tol = j.value("constraint_tol", o.constraint_tol);
  o.optimality_tol = j.value("optimality_tol", o.optimality_tol);
  solver::validate(o);
  return o;
}

}  // namespace

Suite load_suite(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  const std::filesystem::path dir = std::filesystem::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    if (p.empty() || std::filesystem::path(p).is_absolute()) return p;
    return (dir / p).lexically_normal().string();
  };
  Suite s;
  try {
    s.workers = j.value("workers", 1);
    s.solver = solver_options_from(j.value("solver", json()));
    for (const json& r : j.at("runs")) {
      SuiteEntry e;
      e.task = resolve(r.at("task").get<std::string>());
      e.model = resolve(r.value("model", std::string()));
      if (r.contains("charts")) {
        for (const json& c : r.at("charts")) e.charts.push_back(charts::parse_chart(c.get<std::string>()));
      } else {
        e.charts.assign(charts::kAllCharts.begin(), charts::kAllCharts.end());
      }
      s.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (s.workers < 1) throw ValidationError("suite: workers must be at least 1");
  return s;
}

std::vector<RunReport> run_matrix(const Suite& suite) {
  struct Cell {
    size_t entry;
    ChartKind chart;
  };
  std::vector<Cell> cells;
  for (size_t e = 0; e < suite.entries.size(); ++e) {
    for (ChartKind c : suite.entries[e].charts) cells.push_back({e, c});
  }
  // Bundles load up front so a broken file fails its rows, not the run.
  std::vector<std::optional<TaskBundle>> bundles(suite.entries.size());
  std::vector<std::string> load_errors(suite.entries.size());
  for (size_t e = 0; e < suite.entries.size(); ++e) {
    try {
      bundles[e] = load_bundle(suite.entries[e].model, suite.entries[e].task);
    } catch (const Error& err) {
      load_errors[e] = err.what();
    }
  }
  std::vector<RunReport> rows(cells.size());
  RunOptions opts;
  opts.solver = suite.solver;
  parallel_for(static_cast<int>(cells.size()), suite.workers, [&](int i) {
    const Cell& c = cells[i];
    RunReport& r = rows[i];
    r.chart = c.chart;
    r.task = suite.entries[c.entry].task;
    if (!bundles[c.entry]) {
      r.error = load_errors[c.entry];
      return;
    }
    try {
      r = run_task(*bundles[c.entry], c.chart, opts);
    } catch (const Error& err) {
      r.task = bundles[c.entry]->task.name;
      r.model = bundles[c.entry]->model->name;
      r.error = err.what();
    }
  });
  return rows;
}

void write_matrix_csv(const std::vector<RunReport>& rows, std::ostream& out) {
  out << "task,model,chart,status,iterations,objective,objective_evals,jacobian_evals,violation,success,feasible,"
         "net_rotation,position_error,error\n";
  for (const RunReport& r : rows) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << r.task << "," << r.model << "," << chart_name(r.chart) << ","
        << (r.error.empty() ? solver::status_name(r.stats.status) : "Error") << "," << r.stats.iterations << ","
        << short_fmt(r.stats.objective) << "," << r.stats.objective_evals << "," << r.stats.jacobian_evals << ","
        << short_fmt(r.stats.violation) << "," << success_name(r.success) << "," << (r.feasible ? 1 : 0) << ","
        << short_fmt(r.achievement.net_rotation) << "," << short_fmt(r.achievement.position_error) << "," << err
        << "\n";
  }
}

void write_matrix_json(const std::vector<RunReport>& rows, std::ostream& out) {
  json arr = json::array();
  for (const RunReport& r : rows) {
    json j;
    j["task"] = r.task;
    j["model"] = r.model;
    j["chart"] = chart_name(r.chart);
    j["status"] = r.error.empty() ? std::string(solver::status_name(r.stats.status)) : "Error";
    j["iterations"] = r.stats.iterations;
    j["objective"] = r.stats.objective;
    j["objective_evals"] = r.stats.objective_evals;
    j["jacobian_evals"] = r.stats.jacobian_evals;
    j["violation"] = r.stats.violation;
    j["message"] = r.stats.message;
    j["success"] = success_name(r.success);
    j["solved"] = r.error.empty() && r.stats.status == solver::SolveStatus::Solved;
    j["feasible"] = r.feasible;
    j["net_rotation"] = r.achievement.net_rotation;
    j["position_error"] = r.achievement.position_error;
    j["achieved"] = r.achievement.achieved;
    if (!r.error.empty()) j["error"] = r.error;
    arr.push_back(std::move(j));
  }
  json doc;
  doc["note"] = "iterations count accepted inner steps of the built-in solver";
  doc["runs"] = std::move(arr);
  out << doc.dump(2) << "\n";
}

// ---- noise study -------------------------------------------------------------

double quantile(std::vector<double> sample, double p) {
  if (sample.empty()) throw ValidationError("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("quantile level outside [0, 1]");
  std::sort(sample.begin(), sample.end());
  const double pos = p * static_cast<double>(sample.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, sample.size() - 1);
  return sample[lo] + (pos - static_cast<double>(lo)) * (sample[hi] - sample[lo]);
}

std::vector<NoiseStudyReport> run_noise_study(const TaskBundle& b, const NoiseOptions& opts) {
  if (opts.replicates < 1) throw ValidationError("noise study: replicates must be at least 1");
  if (opts.workers < 1) throw ValidationError("noise study: workers must be at least 1");
  if (opts.charts.empty()) throw ValidationError("noise study: no charts");
  for (double s : opts.sigmas) {
    if (!(s >= 0.0)) throw ValidationError("noise study: noise levels must be non-negative");
  }
  solver::validate(opts.solver);

  struct Prepared {
    nlp::NlpProblem p;
    Eigen::VectorXd ws;
  };
  std::vector<Prepared> prepared;
  for (ChartKind c : opts.charts) {
    Prepared pr{transcription::build_nlp(b.model, c, b.task), {}};
    pr.ws = transcription::warmstart_with_hint(transcription::warmstart_neutral(*b.model, pr.p, b.task), pr.p,
                                               b.task);
    prepared.push_back(std::move(pr));
  }

  const int S = static_cast<int>(opts.sigmas.size()), R = opts.replicates;
  const int per_chart = S * R;
  std::vector<NoiseRun> runs(static_cast<size_t>(per_chart) * opts.charts.size());
  parallel_for(static_cast<int>(runs.size()), opts.workers, [&](int i) {
    const int c = i / per_chart, s = (i % per_chart) / R, rep = i % R;
    NoiseRun& run = runs[i];
    run.chart = opts.charts[c];
    run.sigma = opts.sigmas[s];
    run.replicate = rep;
    run.seed = opts.seed + static_cast<unsigned long long>(rep);
    const Prepared& pr = prepared[c];
    const Eigen::VectorXd ws = transcription::perturb_warmstart(pr.ws, pr.p, run.sigma, run.seed);
    run.stats = solver::solve(pr.p, ws, opts.solver).stats;
  });

  std::vector<NoiseStudyReport> out;
  for (size_t c = 0; c < opts.charts.size(); ++c) {
    NoiseStudyReport r;
    r.task = b.task.name;
    r.chart = opts.charts[c];
    r.replicates = R;
    r.runs.assign(runs.begin() + static_cast<long>(c * per_chart), runs.begin() + static_cast<long>((c + 1) * per_chart));
    for (int s = 0; s < S; ++s) {
      NoiseLevel lvl;
      lvl.sigma = opts.sigmas[s];
      lvl.replicates = R;
      std::vector<double> its;
      for (int rep = 0; rep < R; ++rep) {
        const NoiseRun& run = r.runs[s * R + rep];
        if (run.stats.status == solver::SolveStatus::Solved) {
          ++lvl.successes;
          its.push_back(run.stats.iterations);
        }
      }
      if (its.empty()) {
        lvl.q25 = lvl.q50 = lvl.q75 = kNaN;
      } else {
        lvl.q25 = quantile(its, 0.25);
        lvl.q50 = quantile(its, 0.5);
        lvl.q75 = quantile(its, 0.75);
      }
      r.levels.push_back(lvl);
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_noise_runs_csv(const std::vector<NoiseStudyReport>& reports, std::ostream& out) {
  out << "task,chart,sigma,replicate,seed,status,iterations,objective,objective_evals,jacobian_evals,violation\n";
  for (const NoiseStudyReport& r : reports) {
    for (const NoiseRun& run : r.runs) {
      out << r.task << "," << chart_name(run.chart) << "," << short_fmt(run.sigma) << "," << run.replicate << ","
          << run.seed << "," << solver::status_name(run.stats.status) << "," << run.stats.iterations << ","
          << short_fmt(run.stats.objective) << "," << run.stats.objective_evals << "," << run.stats.jacobian_evals
          << "," << short_fmt(run.stats.violation) << "\n";
    }
  }
}

void write_noise_summary_csv(const std::vector<NoiseStudyReport>& reports, std::ostream& out) {
  out << "task,chart,sigma,successes,replicates,success_rate,q25,q50,q75\n";
  for (const NoiseStudyReport& r : reports) {
    for (const NoiseLevel& l : r.levels) {
      out << r.task << "," << chart_name(r.chart) << "," << short_fmt(l.sigma) << "," << l.successes << ","
          << l.replicates << "," << short_fmt(static_cast<double>(l.successes) / l.replicates) << ","
          << short_fmt(l.q25) << "," << short_fmt(l.q50) << "," << short_fmt(l.q75) << "\n";
    }
  }
}

void write_noise_json(const std::vector<NoiseStudyReport>& reports, std::ostream& out) {
  json arr = json::array();
  for (const NoiseStudyReport& r : reports) {
    json j;
    j["task"] = r.task;
    j["chart"] = chart_name(r.chart);
    j["replicates"] = r.replicates;
    json levels = json::array();
    for (const NoiseLevel& l : r.levels) {
      json lj;
      lj["sigma"] = l.sigma;
      lj["successes"] = l.successes;
      lj["success_rate"] = static_cast<double>(l.successes) / l.replicates;
      // Quartiles over solved runs only; null when none solved.
      lj["iterations_q25"] = std::isnan(l.q25) ? json() : json(l.q25);
      lj["iterations_q50"] = std::isnan(l.q50) ? json() : json(l.q50);
      lj["iterations_q75"] = std::isnan(l.q75) ? json() : json(l.q75);
      levels.push_back(std::move(lj));
    }
    j["levels"] = std::move(levels);
    json runs = json::array();
    for (const NoiseRun& run : r.runs) {
      runs.push_back({{"sigma", run.sigma},
                      {"replicate", run.replicate},
                      {"seed", run.seed},
                      {"status", solver::status_name(run.stats.status)},
                      {"iterations", run.stats.iterations}});
    }
    j["runs"] = std::move(runs);
    arr.push_back(std::move(j));
  }
  json doc;
  doc["success"] = "status Solved, regardless of task achievement";
  doc["quartiles"] = "linear interpolation at (n - 1) p over solved runs";
  doc["studies"] = std::move(arr);
  out << doc.dump(2) << "\n";
}

void write_noise_plot(const NoiseStudyReport& r, std::ostream& out) {
  out << "# " << r.task << " " << chart_name(r.chart) << ": sigma q25 q50 q75 (iterations, solved runs)\n";
  for (const NoiseLevel& l : r.levels) {
    out << short_fmt(l.sigma) << " " << short_fmt(l.q25) << " " << short_fmt(l.q50) << " " << short_fmt(l.q75)
        << "\n";
  }
}

void parallel_for(int count, int workers, const std::function<void(int)>& fn) {
  if (workers <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  for (int w = 0; w < std::min(workers, count); ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace fbopt::bench
