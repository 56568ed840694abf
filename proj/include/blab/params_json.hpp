#pragma once

#include "blab/cycle_model.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <string>

namespace blab {

using json = nlohmann::json;

namespace detail {

inline const json& require(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) throw InputError(std::string("missing required field '") + name + "'");
  return *it;
}

inline double read_number(const json& v, const std::string& name) {
  if (!v.is_number()) throw InputError("field '" + name + "' must be a number");
  return v.get<double>();
}

inline int read_int(const json& v, const std::string& name) {
  if (!v.is_number_integer()) throw InputError("field '" + name + "' must be an integer");
  return v.get<int>();
}

// Accepts a number (c times identity for square shapes), nested rows, or a flat row-major list.
inline Eigen::MatrixXd read_matrix(const json& v, const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  if (v.is_number()) {
    if (rows != cols && rows * cols != 1)
      throw InputError("field '" + name + "': a scalar is only accepted for square shapes");
    m = v.get<double>() * Eigen::MatrixXd::Identity(rows, cols);
    return m;
  }
  if (!v.is_array()) throw InputError("field '" + name + "' must be a number or an array");
  const bool nested = !v.empty() && v[0].is_array();
  if (nested) {
    if (static_cast<Eigen::Index>(v.size()) != rows)
      throw InputError("field '" + name + "' has " + std::to_string(v.size()) + " rows, expected " + std::to_string(rows));
    for (Eigen::Index r = 0; r < rows; ++r) {
      const json& row = v[r];
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
        throw InputError("field '" + name + "' row " + std::to_string(r) + " must have " + std::to_string(cols) + " entries");
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = read_number(row[c], name);
    }
    return m;
  }
  if (static_cast<Eigen::Index>(v.size()) != rows * cols)
    throw InputError("field '" + name + "' has " + std::to_string(v.size()) + " entries, expected " +
                     std::to_string(rows * cols));
  for (Eigen::Index i = 0; i < rows * cols; ++i) m(i / cols, i % cols) = read_number(v[i], name);
  return m;
}

inline Eigen::VectorXd read_vector(const json& v, const std::string& name, Eigen::Index n) {
  if (v.is_number()) {
    if (n != 1) throw InputError("field '" + name + "' must be an array of length " + std::to_string(n));
    return Eigen::VectorXd::Constant(1, v.get<double>());
  }
  if (!v.is_array() || static_cast<Eigen::Index>(v.size()) != n)
    throw InputError("field '" + name + "' must be an array of length " + std::to_string(n));
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out(i) = read_number(v[i], name);
  return out;
}

inline json write_matrix(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline json write_vector(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

}  // namespace detail

inline CycleParams params_from_json(const json& j) {
  using namespace detail;
  if (!j.is_object()) throw InputError("configuration must be a JSON object");
  CycleParams p;
  const std::string kind = require(j, "case").get<std::string>();
  if (kind == "Saddle")
    p.kind = Case::Saddle;
  else if (kind == "SaddleFocus")
    p.kind = Case::SaddleFocus;
  else if (kind == "DoubleFocus")
    p.kind = Case::DoubleFocus;
  else
    throw InputError("field 'case' must be one of Saddle, SaddleFocus, DoubleFocus");
  p.d = read_int(require(j, "d"), "d");
  p.d1 = read_int(require(j, "d1"), "d1");
  if (p.d < 3 || p.d1 < 1 || p.d1 > p.d - 2 || p.nz() < 0) throw InputError("fields 'd'/'d1' give impossible dimensions");
  p.lambda = read_number(require(j, "lambda"), "lambda");
  p.gamma = read_number(require(j, "gamma"), "gamma");
  if (p.kind == Case::SaddleFocus) p.omega = read_number(require(j, "omega"), "omega");
  if (p.kind == Case::DoubleFocus) {
    p.omega1 = read_number(require(j, "omega1"), "omega1");
    p.omega2 = read_number(require(j, "omega2"), "omega2");
  }
  const int cs = p.dcs(), cu = p.dcu(), Z = p.nz(), V = p.nv(), W = p.nw(), D1 = p.d1;
  p.a = read_matrix(require(j, "a"), "a", 1, cs);
  p.b = read_matrix(require(j, "b"), "b", cs, 1);
  p.x_plus = read_vector(require(j, "x_plus"), "x_plus", cs);
  p.u_minus = read_vector(require(j, "u_minus"), "u_minus", cu);
  p.delta = read_number(require(j, "delta"), "delta");
  p.q = read_number(require(j, "q"), "q");

  auto opt_m = [&](const char* n, Eigen::MatrixXd& dst, Eigen::Index r, Eigen::Index c) {
    if (j.contains(n)) dst = read_matrix(j.at(n), n, r, c);
  };
  auto opt_v = [&](const char* n, Eigen::VectorXd& dst, Eigen::Index len) {
    if (j.contains(n)) dst = read_vector(j.at(n), n, len);
  };
  opt_m("P1", p.P1, D1, D1);
  opt_m("P2", p.P2, Z, Z);
  opt_m("Q1", p.Q1, V, V);
  opt_m("Q2", p.Q2, W, W);
  opt_m("a12", p.a12, 1, D1);
  opt_m("a13", p.a13, 1, Z);
  opt_m("a21", p.a21, V, cs);
  opt_m("a22", p.a22, V, D1);
  opt_m("a23", p.a23, V, Z);
  opt_m("a31", p.a31, D1, cs);
  opt_m("a32", p.a32, D1, D1);
  opt_m("a33", p.a33, D1, Z);
  opt_m("b12", p.b12, cs, V);
  opt_m("b13", p.b13, cs, D1);
  opt_m("b21", p.b21, D1, 1);
  opt_m("b22", p.b22, D1, V);
  opt_m("b23", p.b23, D1, D1);
  opt_m("b31", p.b31, Z, 1);
  opt_m("b32", p.b32, Z, V);
  opt_m("b33", p.b33, Z, D1);
  opt_v("z_plus", p.z_plus, Z);
  opt_v("y_minus", p.y_minus, D1);
  opt_v("v_plus", p.v_plus, V);
  opt_v("w_minus", p.w_minus, W);
  if (j.contains("mu")) p.mu = read_number(j.at("mu"), "mu");
  if (j.contains("chart_radius")) p.chart_radius = read_number(j.at("chart_radius"), "chart_radius");
  if (j.contains("tails")) {
    const json& t = j.at("tails");
    if (!t.is_object()) throw InputError("field 'tails' must be an object");
    if (t.contains("c_g")) p.tails.c_g = read_number(t.at("c_g"), "tails.c_g");
    if (t.contains("c_t")) p.tails.c_t = read_number(t.at("c_t"), "tails.c_t");
  }
  p.fill_defaults();
  p.validate();
  return p;
}

inline json params_to_json(const CycleParams& p) {
  using namespace detail;
  json j;
  j["case"] = case_name(p.kind);
  j["d"] = p.d;
  j["d1"] = p.d1;
  j["lambda"] = p.lambda;
  j["gamma"] = p.gamma;
  if (p.kind == Case::SaddleFocus) j["omega"] = p.omega;
  if (p.kind == Case::DoubleFocus) {
    j["omega1"] = p.omega1;
    j["omega2"] = p.omega2;
  }
  j["P1"] = write_matrix(p.P1);
  j["P2"] = write_matrix(p.P2);
  j["Q1"] = write_matrix(p.Q1);
  j["Q2"] = write_matrix(p.Q2);
  j["a"] = write_matrix(p.a);
  j["a12"] = write_matrix(p.a12);
  j["a13"] = write_matrix(p.a13);
  j["a21"] = write_matrix(p.a21);
  j["a22"] = write_matrix(p.a22);
  j["a23"] = write_matrix(p.a23);
  j["a31"] = write_matrix(p.a31);
  j["a32"] = write_matrix(p.a32);
  j["a33"] = write_matrix(p.a33);
  j["b"] = write_matrix(p.b);
  j["b12"] = write_matrix(p.b12);
  j["b13"] = write_matrix(p.b13);
  j["b21"] = write_matrix(p.b21);
  j["b22"] = write_matrix(p.b22);
  j["b23"] = write_matrix(p.b23);
  j["b31"] = write_matrix(p.b31);
  j["b32"] = write_matrix(p.b32);
  j["b33"] = write_matrix(p.b33);
  j["x_plus"] = write_vector(p.x_plus);
  j["z_plus"] = write_vector(p.z_plus);
  j["y_minus"] = write_vector(p.y_minus);
  j["v_plus"] = write_vector(p.v_plus);
  j["u_minus"] = write_vector(p.u_minus);
  j["w_minus"] = write_vector(p.w_minus);
  j["mu"] = p.mu;
  j["delta"] = p.delta;
  j["q"] = p.q;
  j["tails"] = {{"c_g", p.tails.c_g}, {"c_t", p.tails.c_t}};
  j["chart_radius"] = p.chart_radius;
  return j;
}

inline std::size_t line_of_offset(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

inline json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(origin + ":" + std::to_string(line_of_offset(text, e.byte)) + ": JSON parse error: " + e.what());
  }
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read configuration file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_json_text(ss.str(), path);
}

}  // namespace blab
