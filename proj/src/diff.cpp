#include "fbopt/diff.hpp"

namespace fbopt::diff {

namespace {

using Mat6d = Eigen::Matrix<double, 6, 6>;
using Vec6d = Eigen::Matrix<double, 6, 1>;
using Partials = std::vector<Mat6d>;
using Inputs = std::vector<const ChainValue*>;

ChainValue tangent(const Vec6d& xi) {
  ChainValue v;
  v.kind = ChainKind::Tangent;
  v.xi = xi;
  return v;
}

ChainValue pose(const lie::Pose& T) {
  ChainValue v;
  v.kind = ChainKind::Pose;
  v.pose = T;
  return v;
}

}  // namespace

ChainRegistry ChainRegistry::with_defaults() {
  ChainRegistry r;
  using K = ChainKind;
  r.add("exp", {{K::Tangent}, K::Pose, [](const Inputs& in, double, ChainValue& out, Partials& p) {
              out = pose(lie::exp_se3(in[0]->xi));
              p = {lie::jac_right_se3(in[0]->xi)};
            }});
  r.add("log", {{K::Pose}, K::Tangent, [](const Inputs& in, double, ChainValue& out, Partials& p) {
              out = tangent(lie::log_se3(in[0]->pose));
              p = {lie::jac_right_se3_inv(out.xi)};
            }});
  r.add("inverse", {{K::Pose}, K::Pose, [](const Inputs& in, double, ChainValue& out, Partials& p) {
                  out = pose(in[0]->pose.inverse());
                  p = {-lie::adjoint(in[0]->pose)};
                }});
  r.add("compose",
        {{K::Pose, K::Pose}, K::Pose, [](const Inputs& in, double, ChainValue& out, Partials& p) {
           out = pose(in[0]->pose * in[1]->pose);
           p = {lie::adjoint(in[1]->pose.inverse()), Mat6d::Identity()};
         }});
  r.add("oplus",
        {{K::Pose, K::Tangent}, K::Pose, [](const Inputs& in, double, ChainValue& out, Partials& p) {
           out = pose(lie::oplus(in[0]->pose, in[1]->xi));
           p = {lie::adjoint(lie::exp_se3(in[1]->xi).inverse()), lie::jac_right_se3(in[1]->xi)};
         }});
  r.add("ominus",
        {{K::Pose, K::Pose}, K::Tangent, [](const Inputs& in, double, ChainValue& out, Partials& p) {
           const lie::Pose C = in[1]->pose.inverse() * in[0]->pose;
           out = tangent(lie::log_se3(C));
           const Mat6d Jinv = lie::jac_right_se3_inv(out.xi);
           p = {Jinv, -Jinv * lie::adjoint(C.inverse())};
         }});
  r.add("scale", {{K::Tangent}, K::Tangent, [](const Inputs& in, double s, ChainValue& out, Partials& p) {
                out = tangent(s * in[0]->xi);
                p = {s * Mat6d::Identity()};
              }});
  return r;
}

void ChainRegistry::add(std::string name, ChainPrimitive p) { prims_[std::move(name)] = std::move(p); }

bool ChainRegistry::contains(std::string_view name) const { return prims_.find(name) != prims_.end(); }

const ChainPrimitive& ChainRegistry::get(std::string_view name) const {
  const auto it = prims_.find(name);
  if (it == prims_.end()) {
    throw UnregisteredPrimitive("no analytic Jacobian registered for '" + std::string(name) + "'");
  }
  return it->second;
}

Se3Chain::Se3Chain(ChainRegistry registry) : registry_(std::move(registry)) {}

int Se3Chain::input(int offset) {
  Node n;
  n.input_offset = offset;
  n.kind = ChainKind::Tangent;
  nodes_.push_back(n);
  return static_cast<int>(nodes_.size()) - 1;
}

int Se3Chain::apply(std::string_view primitive, std::vector<int> args, double param) {
  const ChainPrimitive& p = registry_.get(primitive);
  if (args.size() != p.args.size()) throw DimensionError("wrong argument count for '" + std::string(primitive) + "'");
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] < 0 || args[i] >= static_cast<int>(nodes_.size())) {
      throw DimensionError("chain argument refers to a missing node");
    }
    if (nodes_[args[i]].kind != p.args[i]) {
      throw DimensionError("chain argument kind mismatch for '" + std::string(primitive) + "'");
    }
  }
  Node n;
  n.prim = std::string(primitive);
  n.args = std::move(args);
  n.param = param;
  n.kind = p.result;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Se3Chain::Result Se3Chain::evaluate(const Eigen::VectorXd& x, int output) const {
  if (output < 0 || output >= static_cast<int>(nodes_.size())) {
    throw DimensionError("chain output refers to a missing node");
  }
  const int n = static_cast<int>(x.size());
  std::vector<ChainValue> vals(output + 1);
  Partials partials;
  for (int i = 0; i <= output; ++i) {
    const Node& node = nodes_[i];
    if (node.input_offset >= 0) {
      if (node.input_offset + 6 > n) throw DimensionError("chain input exceeds x");
      vals[i] = tangent(x.segment<6>(node.input_offset));
      vals[i].jac = Eigen::Matrix<double, 6, Eigen::Dynamic>::Zero(6, n);
      vals[i].jac.middleCols<6>(node.input_offset).setIdentity();
      continue;
    }
    Inputs in;
    for (int a : node.args) in.push_back(&vals[a]);
    registry_.get(node.prim).eval(in, node.param, vals[i], partials);
    vals[i].jac = Eigen::Matrix<double, 6, Eigen::Dynamic>::Zero(6, n);
    for (size_t a = 0; a < node.args.size(); ++a) vals[i].jac += partials[a] * vals[node.args[a]].jac;
  }
  return {vals[output], vals[output].jac};
}

Eigen::MatrixXd jacobian_se3_chain(const Se3Chain& chain, int output, const Eigen::VectorXd& x) {
  return chain.evaluate(x, output).jacobian;
}

Se3ResidualJacobian se3_integration_residual(const Vec6d& xi_k, const Vec6d& xi_k1, const Vec6d& V,
                                             double h) {
  const Vec6d u = V * h;
  const lie::Pose A = lie::exp_se3(xi_k);
  const lie::Pose E = lie::exp_se3(u);
  const lie::Pose B = lie::exp_se3(xi_k1);
  const lie::Pose C = (A * E).inverse() * B;
  Se3ResidualJacobian out;
  out.residual = lie::log_se3(C);
  const Mat6d Jinv = lie::jac_right_se3_inv(out.residual);
  const Mat6d Ad_Cinv = lie::adjoint(C.inverse());
  out.jacobian.leftCols<6>() = -Jinv * lie::adjoint(B.inverse() * A) * lie::jac_right_se3(xi_k);
  out.jacobian.middleCols<6>(6) = Jinv * lie::jac_right_se3(xi_k1);
  out.jacobian.rightCols<6>() = -h * Jinv * Ad_Cinv * lie::jac_right_se3(u);
  return out;
}

Se3DifferenceJacobian se3_difference(const Vec6d& xi1, const Vec6d& xi2) {
  const lie::Pose A = lie::exp_se3(xi1);
  const lie::Pose B = lie::exp_se3(xi2);
  const lie::Pose C = A.inverse() * B;
  Se3DifferenceJacobian out;
  out.value = lie::log_se3(C);
  const Mat6d Jinv = lie::jac_right_se3_inv(out.value);
  out.jacobian.leftCols<6>() = -Jinv * lie::adjoint(C.inverse()) * lie::jac_right_se3(xi1);
  out.jacobian.rightCols<6>() = Jinv * lie::jac_right_se3(xi2);
  return out;
}

}  // namespace fbopt::diff
