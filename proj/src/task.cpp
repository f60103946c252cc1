#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fbopt/errors.hpp"
#include "fbopt/transcription.hpp"
#include "json.hpp"

namespace fbopt::transcription {

using json = nlohmann::json;

namespace {

Eigen::Vector3d vec3(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw ParseError(std::string(what) + ": expected 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Eigen::Matrix3d rpy_rot(const json& j, const char* what) {
  const Eigen::Vector3d a = vec3(j, what);
  return lie::rpy_to_rot(lie::Rpy<double>{a(0), a(1), a(2)});
}

std::pair<int, int> node_range(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ParseError("nodes: expected [first, last]");
  return {j[0].get<int>(), j[1].get<int>()};
}

Eigen::Vector3d unit_axis(const json& j) {
  const Eigen::Vector3d a = vec3(j, "axis");
  if (a.norm() < 1e-12) throw ValidationError("rotation axis is zero");
  return a.normalized();
}

// "frame" or "frame:point"
ScheduledContact parse_contact(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) return {s, -1};
  try {
    return {s.substr(0, colon), std::stoi(s.substr(colon + 1))};
  } catch (const std::exception&) {
    throw ParseError("contact '" + s + "': bad point index");
  }
}

TaskSpec parse(const json& doc) {
  TaskSpec t;
  t.name = doc.value("name", "");
  t.model = doc.value("model", "");
  t.N = doc.at("nodes").get<int>();
  t.h = doc.at("timestep").get<double>();
  t.friction = doc.value("friction", 0.7);
  if (t.N < 2) throw ValidationError("task needs at least 2 nodes");
  if (!(t.h > 0.0)) throw ValidationError("timestep must be positive");
  if (!(t.friction > 0.0)) throw ValidationError("friction coefficient must be positive");

  if (doc.contains("q0")) {
    const json& q0 = doc["q0"];
    if (q0.contains("position")) t.base0.trans = vec3(q0["position"], "q0.position");
    if (q0.contains("rpy")) t.base0.rot = rpy_rot(q0["rpy"], "q0.rpy");
    const std::vector<double> joints = q0.value("joints", std::vector<double>{});
    t.joints0 = Eigen::Map<const Eigen::VectorXd>(joints.data(), joints.size());
  }
  if (doc.contains("weights")) {
    t.w_config = doc["weights"].value("config", 0.0);
    t.w_accel = doc["weights"].value("accel", 0.0);
  }
  if (t.w_config < 0.0 || t.w_accel < 0.0) throw ValidationError("cost weights must be non-negative");

  t.schedule.assign(t.N, {});
  const json phases = doc.value("phases", json::array());
  for (const json& ph : phases) {
    const auto [first, last] = node_range(ph.at("nodes"));
    if (first < 0 || last >= t.N || first > last) throw ScheduleError("phase node range outside the horizon");
    for (const json& c : ph.at("contacts")) {
      const ScheduledContact sc = parse_contact(c.get<std::string>());
      for (int k = first; k <= last; ++k) t.schedule[k].push_back(sc);
    }
  }
  const json regions = doc.value("contact_regions", json::object());
  for (const auto& [frame, box] : regions.items()) {
    RegionBox r;
    r.min = vec3(box.at("min"), "region.min");
    r.max = vec3(box.at("max"), "region.max");
    if ((r.min.array() > r.max.array()).any()) throw ValidationError("region '" + frame + "' has min > max");
    t.regions[frame] = r;
  }

  if (doc.contains("goal")) {
    const json& g = doc["goal"];
    if (g.contains("position")) t.goal.position = vec3(g["position"], "goal.position");
    t.goal.position_tolerance = g.value("position_tolerance", t.goal.position_tolerance);
    if (g.contains("orientation_rpy")) t.goal.orientation = rpy_rot(g["orientation_rpy"], "goal.orientation_rpy");
    t.goal.orientation_tolerance = g.value("orientation_tolerance", t.goal.orientation_tolerance);
    if (g.contains("net_rotation")) {
      t.goal.net_rotation = NetRotationGoal{unit_axis(g["net_rotation"].at("axis")),
                                            g["net_rotation"].at("angle").get<double>()};
    }
    t.goal.rotation_tolerance = g.value("rotation_tolerance", t.goal.rotation_tolerance);
    if (t.goal.orientation && !t.goal.position) {
      throw ValidationError("an orientation goal needs a position goal");
    }
  }
  if (doc.contains("hint")) {
    const json& hj = doc["hint"];
    const auto [first, last] = node_range(hj.at("nodes"));
    if (first < 0 || last >= t.N || first > last) throw ValidationError("hint node range outside the horizon");
    OrientationHint hint{first, last, Eigen::Matrix3d::Identity()};
    if (hj.contains("rpy")) {
      hint.orientation = rpy_rot(hj["rpy"], "hint.rpy");
    } else {
      hint.orientation = lie::exp_so3(Eigen::Vector3d(unit_axis(hj.at("axis")) * hj.at("angle").get<double>()));
    }
    t.hint = hint;
  }
  if (doc.contains("achievement")) {
    t.achieve_rotation_tolerance = doc["achievement"].value("rotation_tolerance", t.achieve_rotation_tolerance);
    t.achieve_position_tolerance = doc["achievement"].value("position_tolerance", t.achieve_position_tolerance);
  }
  return t;
}

}  // namespace

TaskSpec parse_task(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("task: ") + e.what());
  }
  try {
    return parse(doc);
  } catch (const json::exception& e) {
    throw ParseError(std::string("task: ") + e.what());
  }
}

TaskSpec load_task_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open task file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_task(ss.str());
}

std::string resolve_model_path(const std::string& task_path, const TaskSpec& task) {
  if (task.model.empty()) throw ValidationError("task does not name a model file");
  const std::filesystem::path m(task.model);
  if (m.is_absolute()) return m.string();
  return (std::filesystem::path(task_path).parent_path() / m).lexically_normal().string();
}

ResolvedSchedule resolve_schedule(const rbd::RobotModel& model, const TaskSpec& task) {
  if (static_cast<int>(task.schedule.size()) != task.N) throw ScheduleError("schedule length differs from N");
  ResolvedSchedule out(task.N);
  for (int k = 0; k < task.N; ++k) {
    for (const ScheduledContact& c : task.schedule[k]) {
      int f = -1;
      try {
        f = model.frame_index(c.frame);
      } catch (const UnknownFrame&) {
        throw ScheduleError("scheduled contact frame '" + c.frame + "' is not in the model");
      }
      const int np = static_cast<int>(model.contact_frames[f].points.size());
      if (c.point >= np || c.point < -1) {
        throw ScheduleError("contact frame '" + c.frame + "' has no point " + std::to_string(c.point));
      }
      for (int p = (c.point < 0 ? 0 : c.point); p < (c.point < 0 ? np : c.point + 1); ++p) {
        const ContactRef ref{f, p};
        if (std::find(out[k].begin(), out[k].end(), ref) != out[k].end()) {
          throw ScheduleError("contact '" + c.frame + "' scheduled twice at one node");
        }
        out[k].push_back(ref);
      }
    }
  }
  return out;
}

void validate_task(const rbd::RobotModel& model, const TaskSpec& task) {
  resolve_schedule(model, task);
  if (task.joints0.size() != model.num_joints()) {
    throw DimensionError("q0 has " + std::to_string(task.joints0.size()) + " joints, model has " +
                         std::to_string(model.num_joints()));
  }
  if (!model.floating_base && (task.goal.position || task.goal.net_rotation || task.hint)) {
    throw ValidationError("base goals need a floating-base model");
  }
  for (const auto& [frame, box] : task.regions) {
    try {
      model.frame_index(frame);
    } catch (const UnknownFrame&) {
      throw ScheduleError("contact region names unknown frame '" + frame + "'");
    }
  }
}

bool is_touchdown(const ResolvedSchedule& schedule, int k, const ContactRef& c) {
  if (k == 0) return false;
  const auto& prev = schedule[k - 1];
  return std::find(prev.begin(), prev.end(), c) == prev.end();
}

}  // namespace fbopt::transcription
