#pragma once

// Spatial-algebra rigid-body dynamics for kinematic trees with a floating
// (or fixed) base and revolute/prismatic joints.
//
// Spatial vectors are ordered (linear, angular) to match the SE(3) tangent
// convention: motions (v, w), forces (f, n). The base block of the
// generalized velocity is the body twist of the base link. Contact forces
// are 3-vectors in the world frame applied at material points.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <string>
#include <string_view>
#include <vector>

#include "fbopt/charts.hpp"
#include "fbopt/liegroups.hpp"

namespace fbopt::rbd {

using lie::Mat3;
using lie::Mat6;
using lie::MatX;
using lie::Se3Pose;
using lie::Vec3;
using lie::Vec6;
using lie::VecX;

enum class JointType { Revolute, Prismatic };

struct Link {
  std::string name;
  double mass = 1.0;
  Eigen::Vector3d com = Eigen::Vector3d::Zero();
  Eigen::Matrix3d inertia = Eigen::Matrix3d::Identity();  // about the COM
};

// Joint k moves link k + 1 relative to its parent link.
struct Joint {
  std::string name;
  JointType type = JointType::Revolute;
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
  int parent = 0;
  lie::Pose placement;
  double q_min = -1e20;
  double q_max = 1e20;
  double v_max = 1e20;
  double tau_min = -1e20;
  double tau_max = 1e20;
};

struct ContactFrame {
  std::string name;
  int link = 0;
  lie::Pose offset;
  std::vector<Eigen::Vector3d> points;  // in the frame
};

struct RobotModel {
  std::string name;
  bool floating_base = true;
  Eigen::Vector3d gravity{0.0, 0.0, -9.81};
  std::vector<Link> links;  // links[0] is the base
  std::vector<Joint> joints;
  std::vector<ContactFrame> contact_frames;

  int num_joints() const { return static_cast<int>(joints.size()); }
  int nv() const { return (floating_base ? 6 : 0) + num_joints(); }
  int base_offset() const { return floating_base ? 6 : 0; }
  double total_mass() const;
  int frame_index(std::string_view name) const;  // throws UnknownFrame
  const ContactFrame& frame(int index) const;    // throws UnknownFrame
  // Ancestor test along the tree (a link is its own ancestor).
  bool is_ancestor(int ancestor, int link) const;
};

// Parses and validates a model document (JSON schema in docs/formats.md).
RobotModel load_model(std::string_view text);
RobotModel load_model_file(const std::string& path);
// Throws ValidationError on any broken invariant.
void validate(const RobotModel& model);

template <class S>
struct ContactForce {
  int frame = 0;
  int point = 0;
  Vec3<S> force = Vec3<S>::Zero();
};

// 6x6 spatial inertia at the link origin, (lin, ang) ordering.
Eigen::Matrix<double, 6, 6> spatial_inertia(const Link& link);

namespace detail {

template <class S>
Vec6<S> joint_subspace(const Joint& j) {
  Vec6<S> s = Vec6<S>::Zero();
  const Vec3<S> axis = j.axis.cast<S>();
  if (j.type == JointType::Revolute) {
    s.template tail<3>() = axis;
  } else {
    s.template head<3>() = axis;
  }
  return s;
}

template <class S>
Se3Pose<S> joint_transform(const Joint& j, const S& q) {
  Se3Pose<S> motion;
  if (j.type == JointType::Revolute) {
    motion.rot = lie::exp_so3(Vec3<S>(j.axis.cast<S>() * q));
  } else {
    motion.trans = j.axis.cast<S>() * q;
  }
  return j.placement.cast<S>() * motion;
}

// Motion vector of the parent expressed in the child frame; X = child pose
// in the parent.
template <class S>
Vec6<S> motion_to_child(const Se3Pose<S>& X, const Vec6<S>& m) {
  const Mat3<S> Rt = X.rot.transpose();
  const Vec3<S> w = m.template tail<3>();
  Vec6<S> out;
  out << Rt * (m.template head<3>() - X.trans.cross(w)), Rt * w;
  return out;
}

template <class S>
Vec6<S> force_to_parent(const Se3Pose<S>& X, const Vec6<S>& f) {
  const Vec3<S> fl = X.rot * f.template head<3>();
  Vec6<S> out;
  out << fl, X.rot * f.template tail<3>() + X.trans.cross(fl);
  return out;
}

template <class S>
Vec6<S> cross_motion(const Vec6<S>& v, const Vec6<S>& m) {
  const Vec3<S> vl = v.template head<3>(), w = v.template tail<3>();
  Vec6<S> out;
  out << w.cross(m.template head<3>()) + vl.cross(m.template tail<3>()),
      w.cross(m.template tail<3>());
  return out;
}

template <class S>
Vec6<S> cross_force(const Vec6<S>& v, const Vec6<S>& f) {
  const Vec3<S> vl = v.template head<3>(), w = v.template tail<3>();
  Vec6<S> out;
  out << w.cross(f.template head<3>()), w.cross(f.template tail<3>()) + vl.cross(f.template head<3>());
  return out;
}

template <class S>
Vec6<S> apply_inertia(const Link& link, const Vec6<S>& v) {
  const Vec3<S> c = link.com.cast<S>();
  const Vec3<S> vl = v.template head<3>(), w = v.template tail<3>();
  const Vec3<S> lin = link.mass * (vl + w.cross(c));
  Vec6<S> out;
  out << lin, link.inertia.cast<S>() * w + c.cross(lin);
  return out;
}

template <class S>
void check_dims(const RobotModel& model, const VecX<S>& q) {
  if (q.size() != model.num_joints()) throw DimensionError("joint vector has wrong size");
}

}  // namespace detail

// Base-link world pose for the given base coordinates (identity when fixed).
template <class S>
Se3Pose<S> base_pose(const RobotModel& model, const charts::BaseCoords<S>& base) {
  if (!model.floating_base) return Se3Pose<S>::Identity();
  return charts::base_to_pose(base);
}

// World pose of every link.
template <class S>
std::vector<Se3Pose<S>> link_poses(const RobotModel& model, const Se3Pose<S>& base,
                                   const VecX<S>& q) {
  detail::check_dims(model, q);
  std::vector<Se3Pose<S>> poses(model.links.size());
  poses[0] = base;
  for (int k = 0; k < model.num_joints(); ++k) {
    const Joint& j = model.joints[k];
    poses[k + 1] = poses[j.parent] * detail::joint_transform(j, q(k));
  }
  return poses;
}

template <class S>
Se3Pose<S> frame_pose(const RobotModel& model, const Se3Pose<S>& base, const VecX<S>& q,
                      int frame) {
  const ContactFrame& f = model.frame(frame);
  return link_poses(model, base, q)[f.link] * f.offset.cast<S>();
}

template <class S>
Se3Pose<S> forward_kinematics(const RobotModel& model, const charts::GeneralizedConfig<S>& q,
                              int frame) {
  return frame_pose(model, base_pose(model, q.base), q.joints, frame);
}

template <class S>
Vec3<S> point_position(const RobotModel& model, const Se3Pose<S>& base, const VecX<S>& q,
                       int frame, int point) {
  const ContactFrame& f = model.frame(frame);
  if (point < 0 || point >= static_cast<int>(f.points.size())) {
    throw UnknownFrame("contact point index out of range");
  }
  return frame_pose(model, base, q, frame).act(f.points[point].cast<S>());
}

// Body twists of every link, (lin, ang) in link coordinates.
template <class S>
std::vector<Vec6<S>> link_twists(const RobotModel& model, const VecX<S>& q, const VecX<S>& v) {
  const int off = model.base_offset();
  std::vector<Vec6<S>> tw(model.links.size(), Vec6<S>::Zero());
  if (model.floating_base) tw[0] = v.template head<6>();
  for (int k = 0; k < model.num_joints(); ++k) {
    const Joint& j = model.joints[k];
    const Se3Pose<S> X = detail::joint_transform(j, q(k));
    tw[k + 1] = detail::motion_to_child(X, tw[j.parent]) + detail::joint_subspace<S>(j) * v(off + k);
  }
  return tw;
}

// World-frame velocity of a contact point, by forward velocity propagation.
template <class S>
Vec3<S> point_velocity(const RobotModel& model, const Se3Pose<S>& base, const VecX<S>& q,
                       const VecX<S>& v, int frame, int point) {
  if (v.size() != model.nv()) throw DimensionError("velocity vector has wrong size");
  const ContactFrame& f = model.frame(frame);
  if (point < 0 || point >= static_cast<int>(f.points.size())) {
    throw UnknownFrame("contact point index out of range");
  }
  const auto poses = link_poses(model, base, q);
  const auto tw = link_twists(model, q, v);
  const Vec3<S> r = f.offset.cast<S>().act(f.points[point].cast<S>());
  const Vec6<S>& t = tw[f.link];
  return poses[f.link].rot * (t.template head<3>() + t.template tail<3>().cross(r));
}

// 3 x nv matrix J with point_velocity = J v.
template <class S>
MatX<S> contact_jacobian(const RobotModel& model, const Se3Pose<S>& base, const VecX<S>& q,
                         int frame, int point) {
  const ContactFrame& f = model.frame(frame);
  const auto poses = link_poses(model, base, q);
  const Vec3<S> p = point_position(model, base, q, frame, point);
  MatX<S> J = MatX<S>::Zero(3, model.nv());
  if (model.floating_base) {
    const Vec3<S> r = base.rot.transpose() * (p - base.trans);
    J.template block<3, 3>(0, 0) = base.rot;
    J.template block<3, 3>(0, 3) = -base.rot * lie::hat3(r);
  }
  const int off = model.base_offset();
  for (int k = 0; k < model.num_joints(); ++k) {
    if (!model.is_ancestor(k + 1, f.link)) continue;
    const Joint& j = model.joints[k];
    const Vec3<S> a = poses[k + 1].rot * j.axis.cast<S>();
    if (j.type == JointType::Revolute) {
      J.col(off + k) = a.cross(p - poses[k + 1].trans);
    } else {
      J.col(off + k) = a;
    }
  }
  return J;
}

// Recursive Newton-Euler: returns M(q) a + C(q, v) - sum_i J_i^T lambda_i.
// The first six rows (floating base) are the net base wrench in base
// coordinates and vanish for a dynamically consistent motion.
template <class S>
VecX<S> inverse_dynamics(const RobotModel& model, const Se3Pose<S>& base, const VecX<S>& q,
                         const VecX<S>& v, const VecX<S>& a,
                         const std::vector<ContactForce<S>>& forces = {}) {
  detail::check_dims(model, q);
  if (v.size() != model.nv() || a.size() != model.nv()) {
    throw DimensionError("velocity/acceleration vector has wrong size");
  }
  const int nl = static_cast<int>(model.links.size());
  const int off = model.base_offset();
  std::vector<Se3Pose<S>> X(nl), world(nl);
  std::vector<Vec6<S>> vel(nl, Vec6<S>::Zero()), acc(nl, Vec6<S>::Zero()), f(nl);

  world[0] = base;
  Vec6<S> g_body = Vec6<S>::Zero();
  g_body.template head<3>() = base.rot.transpose() * model.gravity.cast<S>();
  acc[0] = -g_body;
  if (model.floating_base) {
    vel[0] = v.template head<6>();
    acc[0] += a.template head<6>();
  }
  f[0] = detail::apply_inertia(model.links[0], acc[0]) +
         detail::cross_force(vel[0], detail::apply_inertia(model.links[0], vel[0]));

  for (int k = 0; k < model.num_joints(); ++k) {
    const Joint& j = model.joints[k];
    const int i = k + 1;
    X[i] = detail::joint_transform(j, q(k));
    world[i] = world[j.parent] * X[i];
    const Vec6<S> s = detail::joint_subspace<S>(j);
    const Vec6<S> vj = s * v(off + k);
    vel[i] = detail::motion_to_child(X[i], vel[j.parent]) + vj;
    acc[i] = detail::motion_to_child(X[i], acc[j.parent]) + s * a(off + k) +
             detail::cross_motion(vel[i], vj);
    const Link& link = model.links[i];
    f[i] = detail::apply_inertia(link, acc[i]) +
           detail::cross_force(vel[i], detail::apply_inertia(link, vel[i]));
  }

  for (const ContactForce<S>& cf : forces) {
    const ContactFrame& fr = model.frame(cf.frame);
    if (cf.point < 0 || cf.point >= static_cast<int>(fr.points.size())) {
      throw UnknownFrame("contact point index out of range");
    }
    const Vec3<S> r = fr.offset.cast<S>().act(fr.points[cf.point].template cast<S>());
    const Vec3<S> fb = world[fr.link].rot.transpose() * cf.force;
    f[fr.link].template head<3>() -= fb;
    f[fr.link].template tail<3>() -= r.cross(fb);
  }

  VecX<S> tau(model.nv());
  for (int k = model.num_joints() - 1; k >= 0; --k) {
    const int i = k + 1;
    const Joint& j = model.joints[k];
    tau(off + k) = detail::joint_subspace<S>(j).dot(f[i]);
    f[j.parent] += detail::force_to_parent(X[i], f[i]);
  }
  if (model.floating_base) tau.template head<6>() = f[0];
  return tau;
}

// Composite-rigid-body mass matrix.
Eigen::MatrixXd mass_matrix(const RobotModel& model, const Eigen::VectorXd& q);

}  // namespace fbopt::rbd
