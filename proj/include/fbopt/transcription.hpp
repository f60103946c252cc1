#pragma once

// Inverse-dynamics direct transcription of a contact-scheduled motion task.
//
// Per node k: base coords, joints, velocity v_k, acceleration a_k and, for
// each scheduled contact, a world force and a world contact point. Physics
// enters as a torque window on ID(q_k, v_k, a_k, forces) whose six base rows
// are pinned to zero. Integration is semi-implicit:
//   v_{k+1} = v_k + a_k h,  x_{k+1} = integrate(x_k, v_{k+1} h).

#include <Eigen/Core>

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fbopt/charts.hpp"
#include "fbopt/nlp.hpp"
#include "fbopt/rbd.hpp"

namespace fbopt::transcription {

using charts::ChartKind;

// point = -1 schedules every point of the frame.
struct ScheduledContact {
  std::string frame;
  int point = -1;
};

struct ContactRef {
  int frame = 0;
  int point = 0;
  bool operator==(const ContactRef&) const = default;
};

using ResolvedSchedule = std::vector<std::vector<ContactRef>>;

struct RegionBox {
  Eigen::Vector3d min = Eigen::Vector3d(-1e20, -1e20, 0.0);
  Eigen::Vector3d max = Eigen::Vector3d(1e20, 1e20, 0.0);
};

struct NetRotationGoal {
  Eigen::Vector3d axis = Eigen::Vector3d::UnitY();  // world frame, unit
  double angle = 0.0;
};

struct Goal {
  std::optional<Eigen::Vector3d> position;
  double position_tolerance = 0.02;
  std::optional<Eigen::Matrix3d> orientation;
  double orientation_tolerance = 0.05;
  std::optional<NetRotationGoal> net_rotation;
  double rotation_tolerance = 0.1;
};

// Base orientation override for nodes [first, last] of the warm start.
struct OrientationHint {
  int first = 0;
  int last = 0;
  Eigen::Matrix3d orientation = Eigen::Matrix3d::Identity();
};

struct TaskSpec {
  std::string name;
  std::string model;  // model file, relative to the task file
  int N = 2;
  double h = 0.05;
  double friction = 0.7;
  std::vector<std::vector<ScheduledContact>> schedule;  // per node
  std::map<std::string, RegionBox> regions;             // per contact frame
  Goal goal;
  double w_config = 0.0;
  double w_accel = 0.0;
  lie::Pose base0;
  Eigen::VectorXd joints0;
  std::optional<OrientationHint> hint;
  // Achievement thresholds used when classifying a solve.
  double achieve_rotation_tolerance = 0.3;
  double achieve_position_tolerance = 0.05;
};

TaskSpec parse_task(std::string_view json_text);
TaskSpec load_task_file(const std::string& path);
// Model file named by the task, resolved against the task file's directory.
std::string resolve_model_path(const std::string& task_path, const TaskSpec& task);

// Frame names and point indices checked against the model (ScheduleError).
ResolvedSchedule resolve_schedule(const rbd::RobotModel& model, const TaskSpec& task);
void validate_task(const rbd::RobotModel& model, const TaskSpec& task);

// Contact c is scheduled at k but was not at k - 1. Its stationarity row is
// dropped there so that landing can absorb an impulse.
bool is_touchdown(const ResolvedSchedule& schedule, int k, const ContactRef& c);

nlp::NlpProblem build_nlp(std::shared_ptr<const rbd::RobotModel> model, ChartKind chart,
                          const TaskSpec& task);

using Warmstart = Eigen::VectorXd;

Warmstart warmstart_neutral(const rbd::RobotModel& model, const nlp::NlpProblem& nlp,
                            const TaskSpec& task);
Warmstart warmstart_with_hint(const Warmstart& ws, const nlp::NlpProblem& nlp, const TaskSpec& task);
Warmstart perturb_warmstart(const Warmstart& ws, const nlp::NlpProblem& nlp, double sigma,
                            unsigned long long seed);

// Trajectory quantities read back from x through the layout.
struct NodeState {
  charts::BaseCoords<double> base;
  Eigen::VectorXd joints, vel, acc;
  std::vector<rbd::ContactForce<double>> forces;
  std::vector<Eigen::Vector3d> points;
};

NodeState node_state(const nlp::NlpProblem& nlp, const Eigen::VectorXd& x, int k);

// Accumulated world-frame rotation about `axis` along a pose sequence.
template <class S>
S accumulated_rotation(const std::vector<lie::Mat3<S>>& rotations, const Eigen::Vector3d& axis) {
  S total(0.0);
  for (size_t k = 0; k + 1 < rotations.size(); ++k) {
    const lie::Mat3<S> step = rotations[k].transpose() * rotations[k + 1];
    const lie::Vec3<S> w = rotations[k] * lie::log_so3(step);
    total += axis.cast<S>().dot(w);
  }
  return total;
}

}  // namespace fbopt::transcription
