#include "fbopt/transcription.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "fbopt/errors.hpp"

namespace fbopt::transcription {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using nlp::BlockKind;
using nlp::ConstraintBlock;
using nlp::CostBlock;
using ModelPtr = std::shared_ptr<const rbd::RobotModel>;

template <class Z>
using ScalarOf = typename std::decay_t<Z>::Scalar;

std::vector<int> span(int begin, int count) {
  std::vector<int> v(count);
  for (int i = 0; i < count; ++i) v[i] = begin + i;
  return v;
}

std::vector<int> concat(std::initializer_list<std::vector<int>> parts) {
  std::vector<int> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

double finite_or_inf(double b) { return std::abs(b) >= 1e20 ? std::copysign(kInf, b) : b; }

// Base pose from the leading `d` local variables (identity for fixed bases).
template <class V>
lie::Se3Pose<ScalarOf<V>> local_pose(ChartKind chart, int d, const V& z, int offset = 0) {
  using S = ScalarOf<V>;
  if (d == 0) return lie::Se3Pose<S>::Identity();
  return charts::base_to_pose(charts::BaseCoords<S>{chart, z.segment(offset, d)});
}

template <class F>
ConstraintBlock ad_block(BlockKind kind, int node, std::vector<int> cols, Eigen::VectorXd lo, Eigen::VectorXd hi,
                         F f) {
  ConstraintBlock b;
  b.kind = kind;
  b.node = node;
  b.cols = std::move(cols);
  b.lo = std::move(lo);
  b.hi = std::move(hi);
  std::tie(b.eval, b.jac) = nlp::ad_evaluators(std::move(f));
  return b;
}

// Rows A z with constant A.
ConstraintBlock linear_block(BlockKind kind, int node, std::vector<int> cols, Eigen::VectorXd lo,
                             Eigen::VectorXd hi, Eigen::MatrixXd A) {
  ConstraintBlock b;
  b.kind = kind;
  b.node = node;
  b.cols = std::move(cols);
  b.lo = std::move(lo);
  b.hi = std::move(hi);
  b.eval = [A](const Eigen::VectorXd& z) -> Eigen::VectorXd { return A * z; };
  b.jac = [A](const Eigen::VectorXd&) -> Eigen::MatrixXd { return A; };
  return b;
}

Eigen::VectorXd zeros(int n) { return Eigen::VectorXd::Zero(n); }

// [-I, I, -h I] over (prev, next, rate).
Eigen::MatrixXd step_matrix(int n, double h) {
  Eigen::MatrixXd A(n, 3 * n);
  A << -Eigen::MatrixXd::Identity(n, n), Eigen::MatrixXd::Identity(n, n), -h * Eigen::MatrixXd::Identity(n, n);
  return A;
}

struct Builder {
  ModelPtr model;
  ChartKind chart;
  const TaskSpec& task;
  ResolvedSchedule schedule;
  nlp::NlpProblem p;
  int d = 0, n = 0, nv = 0;

  void allocate() {
    const bool fb = model->floating_base;
    d = fb ? charts::chart_dim(chart) : 0;
    n = model->num_joints();
    nv = model->nv();
    p.layout = {chart, d, n, nv, {}};
    int next = 0;
    for (int k = 0; k < task.N; ++k) {
      nlp::NodeSlots s;
      s.base = next;
      s.joints = s.base + d;
      s.vel = s.joints + n;
      s.acc = s.vel + nv;
      next = s.acc + nv;
      for (const ContactRef& c : schedule[k]) {
        s.contacts.push_back({c.frame, c.point, next, next + 3});
        next += 6;
      }
      p.layout.nodes.push_back(s);
    }
    p.num_vars = next;
    p.x_lo = Eigen::VectorXd::Constant(next, -kInf);
    p.x_hi = Eigen::VectorXd::Constant(next, kInf);
    const int off = model->base_offset();
    for (const nlp::NodeSlots& s : p.layout.nodes) {
      for (int j = 0; j < n; ++j) {
        const rbd::Joint& jt = model->joints[j];
        p.x_lo(s.joints + j) = finite_or_inf(jt.q_min);
        p.x_hi(s.joints + j) = finite_or_inf(jt.q_max);
        p.x_lo(s.vel + off + j) = -finite_or_inf(jt.v_max);
        p.x_hi(s.vel + off + j) = finite_or_inf(jt.v_max);
      }
      for (const nlp::ContactSlot& c : s.contacts) {
        const auto it = task.regions.find(model->contact_frames[c.frame].name);
        const RegionBox box = it == task.regions.end() ? RegionBox{} : it->second;
        for (int i = 0; i < 3; ++i) {
          p.x_lo(c.position + i) = finite_or_inf(box.min(i));
          p.x_hi(c.position + i) = finite_or_inf(box.max(i));
        }
      }
    }
  }

  std::vector<int> base_cols(int k) const { return span(p.layout.nodes[k].base, d); }
  std::vector<int> joint_cols(int k) const { return span(p.layout.nodes[k].joints, n); }
  std::vector<int> vel_cols(int k) const { return span(p.layout.nodes[k].vel, nv); }
  std::vector<int> acc_cols(int k) const { return span(p.layout.nodes[k].acc, nv); }

  void torque_window(int k) {
    const nlp::NodeSlots& s = p.layout.nodes[k];
    std::vector<int> cols = concat({base_cols(k), joint_cols(k), vel_cols(k), acc_cols(k)});
    std::vector<ContactRef> refs;
    for (const nlp::ContactSlot& c : s.contacts) {
      const auto f = span(c.force, 3);
      cols.insert(cols.end(), f.begin(), f.end());
      refs.push_back({c.frame, c.point});
    }
    const int off = model->base_offset();
    Eigen::VectorXd lo = zeros(nv), hi = zeros(nv);
    for (int j = 0; j < n; ++j) {
      lo(off + j) = finite_or_inf(model->joints[j].tau_min);
      hi(off + j) = finite_or_inf(model->joints[j].tau_max);
    }
    const int dd = d, nn = n, nvv = nv;
    const ChartKind c = chart;
    auto f = [model = model, refs, dd, nn, nvv, c](const auto& z) {
      using S = ScalarOf<decltype(z)>;
      const lie::Se3Pose<S> T = local_pose(c, dd, z);
      std::vector<rbd::ContactForce<S>> forces;
      const int fo = dd + nn + 2 * nvv;
      for (size_t i = 0; i < refs.size(); ++i) {
        forces.push_back({refs[i].frame, refs[i].point, z.template segment<3>(fo + 3 * static_cast<int>(i))});
      }
      return rbd::inverse_dynamics(*model, T, lie::VecX<S>(z.segment(dd, nn)), lie::VecX<S>(z.segment(dd + nn, nvv)),
                                   lie::VecX<S>(z.segment(dd + nn + nvv, nvv)), forces);
    };
    nlp::add_constraint(p, ad_block(BlockKind::TorqueWindow, k, cols, lo, hi, f));
  }

  void integration(int k) {
    const double h = task.h;
    if (d > 0) {
      const int rows = charts::difference_dim(chart);
      const std::vector<int> cols = concat({base_cols(k), base_cols(k + 1), span(p.layout.nodes[k + 1].vel, 6)});
      if (chart == ChartKind::Se3Tangent) {
        ConstraintBlock b;
        b.kind = BlockKind::BaseIntegration;
        b.node = k;
        b.cols = cols;
        b.lo = b.hi = zeros(6);
        b.eval = [h](const Eigen::VectorXd& z) -> Eigen::VectorXd {
          return diff::se3_integration_residual(z.head<6>(), z.segment<6>(6), z.tail<6>(), h).residual;
        };
        b.jac = [h](const Eigen::VectorXd& z) -> Eigen::MatrixXd {
          return diff::se3_integration_residual(z.head<6>(), z.segment<6>(6), z.tail<6>(), h).jacobian;
        };
        nlp::add_constraint(p, std::move(b));
      } else {
        const ChartKind c = chart;
        const int dd = d;
        auto f = [c, dd, h](const auto& z) {
          using S = ScalarOf<decltype(z)>;
          const charts::BaseCoords<S> x{c, z.head(dd)}, xn{c, z.segment(dd, dd)};
          return charts::residual_integration(c, x, xn, lie::Twist<S>::FromTangent(z.tail(6)), h);
        };
        nlp::add_constraint(p, ad_block(BlockKind::BaseIntegration, k, cols, zeros(rows), zeros(rows), f));
      }
    }
    nlp::add_constraint(p, linear_block(BlockKind::VelocityIntegration, k,
                                        concat({vel_cols(k), vel_cols(k + 1), acc_cols(k)}), zeros(nv), zeros(nv),
                                        step_matrix(nv, h)));
    if (n > 0) {
      const int off = model->base_offset();
      nlp::add_constraint(p, linear_block(BlockKind::JointIntegration, k,
                                          concat({joint_cols(k), joint_cols(k + 1),
                                                  span(p.layout.nodes[k + 1].vel + off, n)}),
                                          zeros(n), zeros(n), step_matrix(n, h)));
    }
  }

  void contacts(int k) {
    const nlp::NodeSlots& s = p.layout.nodes[k];
    const ChartKind c = chart;
    const int dd = d, nn = n, nvv = nv;
    for (const nlp::ContactSlot& cs : s.contacts) {
      const int frame = cs.frame, point = cs.point;
      auto pos = [model = model, c, dd, nn, frame, point](const auto& z) {
        using S = ScalarOf<decltype(z)>;
        const lie::Vec3<S> w =
            rbd::point_position(*model, local_pose(c, dd, z), lie::VecX<S>(z.segment(dd, nn)), frame, point);
        return lie::VecX<S>(w - z.template tail<3>());
      };
      nlp::add_constraint(p, ad_block(BlockKind::ContactPosition, k,
                                      concat({base_cols(k), joint_cols(k), span(cs.position, 3)}), zeros(3),
                                      zeros(3), pos));
      if (!is_touchdown(schedule, k, {frame, point})) {
        auto vel = [model = model, c, dd, nn, nvv, frame, point](const auto& z) {
          using S = ScalarOf<decltype(z)>;
          return lie::VecX<S>(rbd::point_velocity(*model, local_pose(c, dd, z), lie::VecX<S>(z.segment(dd, nn)),
                                                  lie::VecX<S>(z.segment(dd + nn, nvv)), frame, point));
        };
        nlp::add_constraint(p, ad_block(BlockKind::ContactStationarity, k,
                                        concat({base_cols(k), joint_cols(k), vel_cols(k)}), zeros(3), zeros(3),
                                        vel));
      }
      // Inscribed four-sided pyramid.
      const double mu = task.friction / std::sqrt(2.0);
      Eigen::MatrixXd A(5, 3);
      A << 0, 0, 1,  //
          -1, 0, mu,  //
          1, 0, mu,   //
          0, -1, mu,  //
          0, 1, mu;
      nlp::add_constraint(p, linear_block(BlockKind::Friction, k, span(cs.force, 3), zeros(5),
                                          Eigen::VectorXd::Constant(5, kInf), A));
    }
  }

  void quat_norm(int k) {
    auto f = [](const auto& z) {
      using S = ScalarOf<decltype(z)>;
      lie::VecX<S> r(1);
      r(0) = z.squaredNorm() - 1.0;
      return r;
    };
    nlp::add_constraint(p, ad_block(BlockKind::QuatNorm, k, span(p.layout.nodes[k].base + 3, 4), zeros(1),
                                    zeros(1), f));
  }

  void goal() {
    const Goal& g = task.goal;
    const int k = task.N - 1;
    if (!g.position) return;
    const ChartKind c = chart;
    const int dd = d;
    if (!g.orientation) {
      const Eigen::Vector3d target = *g.position;
      auto f = [c, dd, target](const auto& z) {
        using S = ScalarOf<decltype(z)>;
        return lie::VecX<S>(local_pose(c, dd, z).trans - target.cast<S>());
      };
      const Eigen::VectorXd tol = Eigen::VectorXd::Constant(3, g.position_tolerance);
      nlp::add_constraint(p, ad_block(BlockKind::Goal, k, base_cols(k), -tol, tol, f));
      return;
    }
    lie::Pose target;
    target.rot = *g.orientation;
    target.trans = *g.position;
    const charts::BaseCoords<double> tc = charts::coords_from_pose(chart, target);
    const int rows = charts::difference_dim(chart);
    Eigen::VectorXd tol(rows);
    tol.head<3>().setConstant(g.position_tolerance);
    // Quaternion components move at half the rotation angle.
    tol.tail(rows - 3).setConstant(rows == 7 ? 0.5 * g.orientation_tolerance : g.orientation_tolerance);
    auto f = [c, tc](const auto& z) {
      using S = ScalarOf<decltype(z)>;
      return charts::base_difference(c, tc.cast<S>(), charts::BaseCoords<S>{c, z});
    };
    nlp::add_constraint(p, ad_block(BlockKind::Goal, k, base_cols(k), -tol, tol, f));
  }

  void net_rotation() {
    if (!task.goal.net_rotation) return;
    const NetRotationGoal goal = *task.goal.net_rotation;
    std::vector<int> cols;
    for (int k = 0; k < task.N; ++k) {
      const auto b = base_cols(k);
      cols.insert(cols.end(), b.begin(), b.end());
    }
    const ChartKind c = chart;
    const int dd = d, N = task.N;
    auto f = [c, dd, N, goal](const auto& z) {
      using S = ScalarOf<decltype(z)>;
      std::vector<lie::Mat3<S>> R;
      for (int k = 0; k < N; ++k) R.push_back(local_pose(c, dd, z, k * dd).rot);
      lie::VecX<S> r(1);
      r(0) = accumulated_rotation(R, goal.axis);
      return r;
    };
    const double tol = task.goal.rotation_tolerance;
    Eigen::VectorXd lo(1), hi(1);
    lo << goal.angle - tol;
    hi << goal.angle + tol;
    nlp::add_constraint(p, ad_block(BlockKind::NetRotation, -1, cols, lo, hi, f));
  }

  void costs(int k) {
    if (task.w_config > 0.0) {
      const double sw = std::sqrt(task.w_config);
      const ChartKind c = chart;
      const int dd = d, nn = n;
      const bool fb = d > 0;
      const charts::BaseCoords<double> x0 = fb ? charts::coords_from_pose(chart, task.base0)
                                               : charts::BaseCoords<double>{};
      const Eigen::VectorXd q0 = task.joints0;
      const int rows = (fb ? charts::difference_dim(chart) : 0) + n;
      auto f = [c, dd, nn, fb, x0, q0, sw](const auto& z) {
        using S = ScalarOf<decltype(z)>;
        const int db = fb ? charts::difference_dim(c) : 0;
        lie::VecX<S> r(db + nn);
        if (fb) r.head(db) = charts::base_difference(c, x0.cast<S>(), charts::BaseCoords<S>{c, z.head(dd)});
        r.tail(nn) = z.tail(nn) - q0.cast<S>();
        return lie::VecX<S>(r * sw);
      };
      CostBlock b;
      b.node = k;
      b.rows = rows;
      b.cols = concat({base_cols(k), joint_cols(k)});
      std::tie(b.eval, b.jac) = nlp::ad_evaluators(f);
      nlp::add_cost(p, std::move(b));
    }
    if (task.w_accel > 0.0) {
      const Eigen::MatrixXd A = std::sqrt(task.w_accel) * Eigen::MatrixXd::Identity(nv, nv);
      CostBlock b;
      b.node = k;
      b.rows = nv;
      b.cols = acc_cols(k);
      b.eval = [A](const Eigen::VectorXd& z) -> Eigen::VectorXd { return A * z; };
      b.jac = [A](const Eigen::VectorXd&) -> Eigen::MatrixXd { return A; };
      nlp::add_cost(p, std::move(b));
    }
  }
};

}  // namespace

nlp::NlpProblem build_nlp(std::shared_ptr<const rbd::RobotModel> model, ChartKind chart, const TaskSpec& task) {
  if (!model) throw ValidationError("build_nlp: no model");
  validate_task(*model, task);
  Builder b{model, chart, task, resolve_schedule(*model, task), {}};
  b.allocate();
  const bool quat = b.d > 0 && charts::is_quat_chart(chart);
  for (int k = 0; k < task.N; ++k) {
    b.torque_window(k);
    if (k + 1 < task.N) b.integration(k);
    b.contacts(k);
    // Quat1/Quat2 renormalize inside integration, so only node 0 is free.
    if (quat && (chart == ChartKind::Quat3 || k == 0)) b.quat_norm(k);
    b.costs(k);
  }
  b.goal();
  b.net_rotation();
  return std::move(b.p);
}

Warmstart warmstart_neutral(const rbd::RobotModel& model, const nlp::NlpProblem& nlp, const TaskSpec& task) {
  const nlp::VariableLayout& L = nlp.layout;
  Warmstart x = Eigen::VectorXd::Zero(nlp.num_vars);
  const Eigen::VectorXd base = L.base_dim > 0 ? charts::coords_from_pose(L.chart, task.base0).data
                                              : Eigen::VectorXd();
  const Eigen::Vector3d weight = -model.gravity * model.total_mass();
  for (const nlp::NodeSlots& s : L.nodes) {
    x.segment(s.base, L.base_dim) = base;
    x.segment(s.joints, L.n_joints) = task.joints0;
    for (const nlp::ContactSlot& c : s.contacts) {
      x.segment<3>(c.force) = weight / static_cast<double>(s.contacts.size());
      x.segment<3>(c.position) = rbd::point_position(model, task.base0, task.joints0, c.frame, c.point);
    }
  }
  return x;
}

Warmstart warmstart_with_hint(const Warmstart& ws, const nlp::NlpProblem& nlp, const TaskSpec& task) {
  if (!task.hint || nlp.layout.base_dim == 0) return ws;
  Warmstart x = ws;
  const nlp::VariableLayout& L = nlp.layout;
  for (int k = task.hint->first; k <= task.hint->last; ++k) {
    const int b = L.nodes[k].base;
    lie::Pose T = charts::base_to_pose(charts::BaseCoords<double>{L.chart, ws.segment(b, L.base_dim)});
    T.rot = task.hint->orientation;
    x.segment(b, L.base_dim) = charts::coords_from_pose(L.chart, T).data;
  }
  return x;
}

Warmstart perturb_warmstart(const Warmstart& ws, const nlp::NlpProblem& nlp, double sigma, unsigned long long seed) {
  if (sigma < 0.0) throw ValidationError("noise level must be non-negative");
  if (sigma == 0.0) return ws;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  Warmstart x = ws;
  for (int i = 0; i < x.size(); ++i) x(i) += noise(rng);
  const nlp::VariableLayout& L = nlp.layout;
  if (L.base_dim > 0 && charts::is_quat_chart(L.chart)) {
    for (const nlp::NodeSlots& s : L.nodes) x.segment<4>(s.base + 3).normalize();
  }
  return x;
}

NodeState node_state(const nlp::NlpProblem& nlp, const Eigen::VectorXd& x, int k) {
  const nlp::VariableLayout& L = nlp.layout;
  const nlp::NodeSlots& s = L.nodes.at(k);
  NodeState out;
  out.base = {L.chart, x.segment(s.base, L.base_dim)};
  out.joints = x.segment(s.joints, L.n_joints);
  out.vel = x.segment(s.vel, L.nv);
  out.acc = x.segment(s.acc, L.nv);
  for (const nlp::ContactSlot& c : s.contacts) {
    out.forces.push_back({c.frame, c.point, x.segment<3>(c.force)});
    out.points.push_back(x.segment<3>(c.position));
  }
  return out;
}

}  // namespace fbopt::transcription
