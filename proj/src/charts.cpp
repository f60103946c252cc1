#include "fbopt/charts.hpp"

namespace fbopt::charts {

std::string_view chart_name(ChartKind c) {
  switch (c) {
    case ChartKind::Se3Tangent: return "se3_tangent";
    case ChartKind::Quat1: return "quat1";
    case ChartKind::Quat2: return "quat2";
    case ChartKind::Quat3: return "quat3";
    case ChartKind::Rpy: return "rpy";
  }
  return "?";
}

ChartKind parse_chart(std::string_view name) {
  for (ChartKind c : kAllCharts) {
    if (chart_name(c) == name) return c;
  }
  throw Error("unknown chart '" + std::string(name) + "'");
}

BaseCoords<double> coords_from_pose(ChartKind c, const lie::Pose& T, double gimbal_guard) {
  BaseCoords<double> x{c, VecX<double>(chart_dim(c))};
  switch (c) {
    case ChartKind::Se3Tangent:
      x.data = lie::log_se3(T);
      break;
    case ChartKind::Rpy:
      x.data << T.trans, lie::rot_to_rpy(T.rot, gimbal_guard).vector();
      break;
    default: {
      const lie::PosQuat<double> parts = lie::parts_from_pose(T);
      x.data << parts.p, parts.q.coeffs();
    }
  }
  return x;
}

}  // namespace fbopt::charts
