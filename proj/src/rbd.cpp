#include "fbopt/rbd.hpp"

#include <Eigen/Cholesky>
#include <fstream>
#include <map>
#include "json.hpp"
#include <sstream>

namespace fbopt::rbd {

using nlohmann::json;

double RobotModel::total_mass() const {
  double m = 0.0;
  for (const Link& l : links) m += l.mass;
  return m;
}

int RobotModel::frame_index(std::string_view name) const {
  for (size_t i = 0; i < contact_frames.size(); ++i) {
    if (contact_frames[i].name == name) return static_cast<int>(i);
  }
  throw UnknownFrame("unknown contact frame '" + std::string(name) + "'");
}

const ContactFrame& RobotModel::frame(int index) const {
  if (index < 0 || index >= static_cast<int>(contact_frames.size())) {
    throw UnknownFrame("contact frame index " + std::to_string(index) + " out of range");
  }
  return contact_frames[index];
}

bool RobotModel::is_ancestor(int ancestor, int link) const {
  while (link > 0) {
    if (link == ancestor) return true;
    link = joints[link - 1].parent;
  }
  return ancestor == 0;
}

Eigen::Matrix<double, 6, 6> spatial_inertia(const Link& link) {
  const Eigen::Matrix3d C = lie::hat3(link.com);
  Eigen::Matrix<double, 6, 6> I;
  I.topLeftCorner<3, 3>() = link.mass * Eigen::Matrix3d::Identity();
  I.topRightCorner<3, 3>() = -link.mass * C;
  I.bottomLeftCorner<3, 3>() = link.mass * C;
  I.bottomRightCorner<3, 3>() = link.inertia - link.mass * C * C;
  return I;
}

void validate(const RobotModel& model) {
  if (model.links.empty()) throw ValidationError("model has no links");
  if (model.joints.size() + 1 != model.links.size()) {
    throw ValidationError("every non-base link needs exactly one parent joint");
  }
  for (const Link& l : model.links) {
    if (!(l.mass > 0.0)) throw ValidationError("link '" + l.name + "' has non-positive mass");
    if ((l.inertia - l.inertia.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
      throw ValidationError("link '" + l.name + "' inertia is not symmetric");
    }
    Eigen::LLT<Eigen::Matrix3d> llt(l.inertia);
    if (llt.info() != Eigen::Success) {
      throw ValidationError("link '" + l.name + "' inertia is not positive-definite");
    }
  }
  for (size_t k = 0; k < model.joints.size(); ++k) {
    const Joint& j = model.joints[k];
    if (j.parent < 0 || j.parent > static_cast<int>(k)) {
      throw ValidationError("joint '" + j.name + "' breaks the tree ordering");
    }
    if (std::abs(j.axis.norm() - 1.0) > 1e-9) {
      throw ValidationError("joint '" + j.name + "' axis is not a unit vector");
    }
    if (j.tau_min > j.tau_max) throw ValidationError("joint '" + j.name + "' has tau_min > tau_max");
    if (j.q_min > j.q_max) throw ValidationError("joint '" + j.name + "' has q_min > q_max");
    if (j.v_max < 0.0) throw ValidationError("joint '" + j.name + "' has negative velocity limit");
  }
  for (const ContactFrame& f : model.contact_frames) {
    if (f.link < 0 || f.link >= static_cast<int>(model.links.size())) {
      throw ValidationError("contact frame '" + f.name + "' references a missing link");
    }
    if (f.points.empty()) throw ValidationError("contact frame '" + f.name + "' has no points");
  }
  if (!model.gravity.allFinite()) throw ValidationError("gravity is not finite");
}

namespace {

Eigen::Vector3d vec3(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw ParseError(std::string(what) + ": expected 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

lie::Pose pose(const json& j) {
  lie::Pose T;
  if (j.contains("xyz")) T.trans = vec3(j["xyz"], "xyz");
  if (j.contains("rpy")) {
    const Eigen::Vector3d a = vec3(j["rpy"], "rpy");
    T.rot = lie::rpy_to_rot(lie::Rpy<double>{a(0), a(1), a(2)});
  }
  return T;
}

// Accepts a 3x3 nested list or the six independent entries
// [ixx, iyy, izz, ixy, ixz, iyz].
Eigen::Matrix3d inertia(const json& j) {
  Eigen::Matrix3d I;
  if (j.is_array() && j.size() == 6 && j[0].is_number()) {
    const double xx = j[0], yy = j[1], zz = j[2], xy = j[3], xz = j[4], yz = j[5];
    I << xx, xy, xz, xy, yy, yz, xz, yz, zz;
    return I;
  }
  if (!j.is_array() || j.size() != 3) throw ParseError("inertia: expected 3x3 or 6 entries");
  for (int r = 0; r < 3; ++r) I.row(r) = vec3(j[r], "inertia row").transpose();
  return I;
}

std::pair<double, double> range(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 2) throw ParseError(std::string(what) + ": expected [lo, hi]");
  return {j[0].get<double>(), j[1].get<double>()};
}

RobotModel parse(const json& doc) {
  RobotModel m;
  m.name = doc.value("name", "");
  m.floating_base = doc.value("floating_base", true);
  if (doc.contains("gravity")) m.gravity = vec3(doc["gravity"], "gravity");

  std::map<std::string, const json*> link_docs;
  std::vector<std::string> link_order;
  for (const json& l : doc.at("links")) {
    const std::string name = l.at("name").get<std::string>();
    if (!link_docs.emplace(name, &l).second) throw ValidationError("duplicate link '" + name + "'");
    link_order.push_back(name);
  }

  // Children per parent link, in file order.
  std::map<std::string, std::vector<const json*>> children;
  std::map<std::string, int> parent_count;
  const json joints = doc.value("joints", json::array());
  for (const json& j : joints) {
    const std::string parent = j.at("parent").get<std::string>();
    const std::string child = j.at("child").get<std::string>();
    if (!link_docs.count(parent) || !link_docs.count(child)) {
      throw ValidationError("joint '" + j.value("name", "") + "' references a missing link");
    }
    if (++parent_count[child] > 1) throw ValidationError("link '" + child + "' has two parents");
    children[parent].push_back(&j);
  }

  std::vector<std::string> roots;
  for (const std::string& n : link_order) {
    if (!parent_count.count(n)) roots.push_back(n);
  }
  if (roots.size() != 1) throw ValidationError("model must have exactly one base link");

  auto make_link = [&](const std::string& name) {
    const json& l = *link_docs.at(name);
    Link link;
    link.name = name;
    link.mass = l.at("mass").get<double>();
    if (l.contains("com")) link.com = vec3(l["com"], "com");
    if (l.contains("inertia")) link.inertia = inertia(l["inertia"]);
    return link;
  };

  auto make_joint = [&](const json& j, int parent) {
    Joint joint;
    joint.name = j.value("name", j.at("child").get<std::string>());
    const std::string type = j.value("type", "revolute");
    if (type == "revolute") {
      joint.type = JointType::Revolute;
    } else if (type == "prismatic") {
      joint.type = JointType::Prismatic;
    } else {
      throw ValidationError("joint '" + joint.name + "' has unsupported type '" + type + "'");
    }
    joint.axis = vec3(j.at("axis"), "axis");
    joint.parent = parent;
    if (j.contains("placement")) joint.placement = pose(j["placement"]);
    if (j.contains("position_limits")) {
      std::tie(joint.q_min, joint.q_max) = range(j["position_limits"], "position_limits");
    }
    if (j.contains("velocity_limit")) joint.v_max = j["velocity_limit"].get<double>();
    if (j.contains("torque_limits")) {
      std::tie(joint.tau_min, joint.tau_max) = range(j["torque_limits"], "torque_limits");
    }
    return joint;
  };

  // Depth-first numbering in file order: parents precede children and each
  // branch's joints stay contiguous.
  std::map<std::string, int> index;
  std::vector<std::pair<const json*, int>> stack;
  auto push_children = [&](const std::string& name, int link) {
    const auto& kids = children[name];
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.emplace_back(*it, link);
  };
  m.links.push_back(make_link(roots[0]));
  index[roots[0]] = 0;
  push_children(roots[0], 0);
  while (!stack.empty()) {
    const auto [jp, parent] = stack.back();
    stack.pop_back();
    const std::string child = jp->at("child").get<std::string>();
    if (index.count(child)) throw ValidationError("kinematic loop through link '" + child + "'");
    index[child] = static_cast<int>(m.links.size());
    m.joints.push_back(make_joint(*jp, parent));
    m.links.push_back(make_link(child));
    push_children(child, index[child]);
  }
  if (m.links.size() != link_order.size()) {
    throw ValidationError("kinematic graph is not a tree (loop or disconnected link)");
  }

  for (const json& f : doc.value("contact_frames", json::array())) {
    ContactFrame frame;
    frame.name = f.at("name").get<std::string>();
    const std::string link = f.at("link").get<std::string>();
    if (!index.count(link)) throw ValidationError("contact frame '" + frame.name + "' references a missing link");
    frame.link = index[link];
    if (f.contains("offset")) frame.offset = pose(f["offset"]);
    for (const json& p : f.value("points", json::array())) frame.points.push_back(vec3(p, "point"));
    m.contact_frames.push_back(frame);
  }
  return m;
}

}  // namespace

RobotModel load_model(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("model: ") + e.what());
  }
  RobotModel m;
  try {
    m = parse(doc);
  } catch (const json::exception& e) {
    throw ParseError(std::string("model: ") + e.what());
  }
  validate(m);
  return m;
}

RobotModel load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_model(ss.str());
}

Eigen::MatrixXd mass_matrix(const RobotModel& model, const Eigen::VectorXd& q) {
  detail::check_dims(model, q);
  using Mat6d = Eigen::Matrix<double, 6, 6>;
  using Vec6d = Eigen::Matrix<double, 6, 1>;
  const int nl = static_cast<int>(model.links.size());
  const int off = model.base_offset();

  // Motion transform parent -> child for each non-base link.
  std::vector<Mat6d> Xm(nl, Mat6d::Identity());
  std::vector<Mat6d> Ic(nl);
  for (int i = 0; i < nl; ++i) Ic[i] = spatial_inertia(model.links[i]);
  for (int k = 0; k < model.num_joints(); ++k) {
    const lie::Pose X = detail::joint_transform(model.joints[k], q(k));
    const Eigen::Matrix3d Rt = X.rot.transpose();
    Mat6d M = Mat6d::Zero();
    M.topLeftCorner<3, 3>() = Rt;
    M.topRightCorner<3, 3>() = -Rt * lie::hat3(X.trans);
    M.bottomRightCorner<3, 3>() = Rt;
    Xm[k + 1] = M;
  }
  for (int i = nl - 1; i >= 1; --i) {
    const int p = model.joints[i - 1].parent;
    Ic[p] += Xm[i].transpose() * Ic[i] * Xm[i];
  }

  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(model.nv(), model.nv());
  if (model.floating_base) H.topLeftCorner<6, 6>() = Ic[0];
  for (int i = nl - 1; i >= 1; --i) {
    const int ji = off + i - 1;
    Vec6d F = Ic[i] * detail::joint_subspace<double>(model.joints[i - 1]);
    H(ji, ji) = detail::joint_subspace<double>(model.joints[i - 1]).dot(F);
    int k = i;
    while (model.joints[k - 1].parent != 0) {
      F = Xm[k].transpose() * F;
      k = model.joints[k - 1].parent;
      const int jk = off + k - 1;
      H(ji, jk) = H(jk, ji) = detail::joint_subspace<double>(model.joints[k - 1]).dot(F);
    }
    if (model.floating_base) {
      F = Xm[k].transpose() * F;
      H.block<6, 1>(0, ji) = F;
      H.block<1, 6>(ji, 0) = F.transpose();
    }
  }
  return H;
}

}  // namespace fbopt::rbd
