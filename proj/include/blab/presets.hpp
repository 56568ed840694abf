#pragma once

#include "blab/cycle_model.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace blab {

// Saddle reference: theta = ln2/ln3, alpha = 0.5, type I.
inline CycleParams ref1() {
  CycleParams p;
  p.kind = Case::Saddle;
  p.d = 3;
  p.d1 = 1;
  p.lambda = 0.5;
  p.gamma = 3.0;
  p.a = Eigen::RowVectorXd::Constant(1, 1.0);
  p.b = Eigen::VectorXd::Constant(1, 1.0);
  p.x_plus = Eigen::VectorXd::Constant(1, 1.0);
  p.u_minus = Eigen::VectorXd::Constant(1, 0.5);
  p.y_minus = Eigen::VectorXd::Constant(1, 1.0);
  p.v_plus = Eigen::VectorXd::Constant(1, 1.0);
  p.z_plus = Eigen::VectorXd::Constant(1, 0.2);
  p.w_minus = Eigen::VectorXd::Constant(1, 0.3);
  p.delta = 0.1;
  p.q = 0.1;
  p.fill_defaults();
  p.validate();
  return p;
}

inline CycleParams ref1_type2() {
  CycleParams p = ref1();
  p.a(0) = -1.0;
  return p;
}

// theta = 1/2 exactly.
inline CycleParams ref2() {
  CycleParams p = ref1();
  p.gamma = 4.0;
  p.Q2 = Eigen::MatrixXd::Constant(1, 1, 5.0);
  p.validate();
  return p;
}

inline CycleParams ref_sf() {
  CycleParams p;
  p.kind = Case::SaddleFocus;
  p.d = 4;
  p.d1 = 1;
  p.lambda = 0.5;
  p.gamma = 3.0;
  p.omega = 2.0 * M_PI * (std::sqrt(2.0) - 1.0);
  p.a = Eigen::RowVectorXd(2);
  p.a << 1.0, 0.0;
  p.b = Eigen::VectorXd(2);
  p.b << 1.0, 0.5;
  p.x_plus = Eigen::VectorXd(2);
  p.x_plus << 1.0, 0.2;
  p.u_minus = Eigen::VectorXd::Constant(1, 0.5);
  p.delta = 0.1;
  p.q = 0.1;
  p.fill_defaults();
  p.validate();
  return p;
}

inline CycleParams ref_df() {
  CycleParams p;
  p.kind = Case::DoubleFocus;
  p.d = 4;
  p.d1 = 1;
  p.lambda = 0.5;
  p.gamma = 3.0;
  p.omega1 = 2.0 * M_PI * (std::sqrt(2.0) - 1.0);
  p.omega2 = 1.0;
  p.a = Eigen::RowVectorXd(2);
  p.a << 1.0, 0.0;
  p.a12 = Eigen::MatrixXd::Constant(1, 1, 0.3);
  p.b = Eigen::VectorXd(2);
  p.b << 1.0, 0.5;
  p.x_plus = Eigen::VectorXd(2);
  p.x_plus << 1.0, 0.2;
  p.u_minus = Eigen::VectorXd(2);
  p.u_minus << 0.5, 0.3;
  p.delta = 0.1;
  p.q = 0.1;
  p.fill_defaults();
  p.validate();
  return p;
}

inline std::vector<std::string> preset_names() {
  return {"ref1-type1", "ref1-typeII", "ref2-rational", "ref-sf", "ref-df"};
}

inline bool find_preset(const std::string& name, CycleParams& out) {
  if (name == "ref1-type1") out = ref1();
  else if (name == "ref1-typeII") out = ref1_type2();
  else if (name == "ref2-rational") out = ref2();
  else if (name == "ref-sf") out = ref_sf();
  else if (name == "ref-df") out = ref_df();
  else return false;
  return true;
}

}  // namespace blab
