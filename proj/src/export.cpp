// Portable problem snapshot. Format (one record per line, '#' comments):
//
//   fbopt-nlp 1
//   size <vars> <rows> <nnz>
//   var <index> <lo> <hi> <warmstart>
//   row <index> <kind> <lo> <hi> <value at warmstart>
//   jac <row> <col> <value>
//   objective <value>
//   grad <index> <value>
//   end
//
// Reals are C99 hex floats ("%a"), infinities "inf"/"-inf".

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fbopt/errors.hpp"
#include "fbopt/solver.hpp"

namespace fbopt::solver {

namespace {

std::string hex(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_real(const std::string& tok) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') throw ParseError("export: bad number '" + tok + "'");
  return v;
}

int parse_index(const std::string& tok, int limit) {
  char* end = nullptr;
  const long v = std::strtol(tok.c_str(), &end, 10);
  if (end == tok.c_str() || *end != '\0' || v < 0 || v >= limit) {
    throw ParseError("export: bad index '" + tok + "'");
  }
  return static_cast<int>(v);
}

}  // namespace

void export_problem(const nlp::NlpProblem& p, const Eigen::VectorXd& ws, std::ostream& out) {
  if (ws.size() != p.num_vars) throw DimensionError("export: warm start does not match the layout");
  const nlp::Evaluation ev = nlp::evaluate(p, ws);
  const nlp::Derivatives d = nlp::jacobians(p, ws);
  out << "fbopt-nlp 1\n";
  out << "size " << p.num_vars << ' ' << p.num_rows << ' ' << d.jacobian.nonZeros() << '\n';
  for (int i = 0; i < p.num_vars; ++i) {
    out << "var " << i << ' ' << hex(p.x_lo(i)) << ' ' << hex(p.x_hi(i)) << ' ' << hex(ws(i)) << '\n';
  }
  for (const nlp::ConstraintBlock& b : p.constraints) {
    for (int r = 0; r < b.rows(); ++r) {
      const int i = b.row_begin + r;
      out << "row " << i << ' ' << nlp::block_kind_name(b.kind) << ' ' << hex(b.lo(r)) << ' ' << hex(b.hi(r)) << ' '
          << hex(ev.constraints(i)) << '\n';
    }
  }
  for (int r = 0; r < d.jacobian.outerSize(); ++r) {
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(d.jacobian, r); it; ++it) {
      out << "jac " << r << ' ' << it.col() << ' ' << hex(it.value()) << '\n';
    }
  }
  out << "objective " << hex(ev.objective) << '\n';
  for (int i = 0; i < p.num_vars; ++i) out << "grad " << i << ' ' << hex(d.gradient(i)) << '\n';
  out << "end\n";
  if (!out) throw IoError("export: write failed");
}

void export_problem(const nlp::NlpProblem& p, const Eigen::VectorXd& ws, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  export_problem(p, ws, f);
}

ExportedProblem import_problem(std::istream& in) {
  ExportedProblem e;
  std::string line;
  bool header = false, size = false, ended = false;
  std::vector<Eigen::Triplet<double>> trips;
  int nnz = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    const std::string& key = tok[0];
    auto need = [&](size_t n) {
      if (tok.size() != n) throw ParseError("export: malformed '" + key + "' record");
    };
    if (!header) {
      if (line != "fbopt-nlp 1") throw ParseError("export: unsupported header '" + line + "'");
      header = true;
    } else if (key == "size") {
      need(4);
      e.num_vars = std::stoi(tok[1]);
      e.num_rows = std::stoi(tok[2]);
      nnz = std::stoi(tok[3]);
      e.x_lo.resize(e.num_vars);
      e.x_hi.resize(e.num_vars);
      e.warmstart.resize(e.num_vars);
      e.gradient = Eigen::VectorXd::Zero(e.num_vars);
      e.row_lo.resize(e.num_rows);
      e.row_hi.resize(e.num_rows);
      e.constraints.resize(e.num_rows);
      e.row_kinds.assign(e.num_rows, "");
      size = true;
    } else if (!size) {
      throw ParseError("export: record before size line");
    } else if (key == "var") {
      need(5);
      const int i = parse_index(tok[1], e.num_vars);
      e.x_lo(i) = parse_real(tok[2]);
      e.x_hi(i) = parse_real(tok[3]);
      e.warmstart(i) = parse_real(tok[4]);
    } else if (key == "row") {
      need(6);
      const int i = parse_index(tok[1], e.num_rows);
      e.row_kinds[i] = tok[2];
      e.row_lo(i) = parse_real(tok[3]);
      e.row_hi(i) = parse_real(tok[4]);
      e.constraints(i) = parse_real(tok[5]);
    } else if (key == "jac") {
      need(4);
      trips.emplace_back(parse_index(tok[1], e.num_rows), parse_index(tok[2], e.num_vars), parse_real(tok[3]));
    } else if (key == "objective") {
      need(2);
      e.objective = parse_real(tok[1]);
    } else if (key == "grad") {
      need(3);
      e.gradient(parse_index(tok[1], e.num_vars)) = parse_real(tok[2]);
    } else if (key == "end") {
      ended = true;
      break;
    } else {
      throw ParseError("export: unknown record '" + key + "'");
    }
  }
  if (!ended) throw ParseError("export: missing end record");
  if (static_cast<int>(trips.size()) != nnz) throw ParseError("export: nonzero count differs from header");
  e.jacobian.resize(e.num_rows, e.num_vars);
  e.jacobian.setFromTriplets(trips.begin(), trips.end());
  return e;
}

ExportedProblem import_problem_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "'");
  return import_problem(f);
}

Eigen::VectorXd ExportedProblem::constraints_at(const Eigen::VectorXd& x) const {
  if (x.size() != num_vars) throw DimensionError("constraints_at: size mismatch");
  const Eigen::VectorXd dx = x - warmstart;
  if (dx.isZero(0.0)) return constraints;
  return constraints + jacobian * dx;
}

}  // namespace fbopt::solver
