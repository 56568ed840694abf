#pragma once

#include <Eigen/Dense>

#include "blab/dual.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace blab {

enum class Case { Saddle, SaddleFocus, DoubleFocus };

inline const char* case_name(Case c) {
  switch (c) {
    case Case::Saddle: return "Saddle";
    case Case::SaddleFocus: return "SaddleFocus";
    case Case::DoubleFocus: return "DoubleFocus";
  }
  return "?";
}

class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PreconditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when an orbit leaves a chart; iterate() is the index of the offending step.
class ChartError : public std::runtime_error {
 public:
  ChartError(const std::string& what, int iterate)
      : std::runtime_error(what), iterate_(iterate) {}
  int iterate() const { return iterate_; }

 private:
  int iterate_;
};

template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

using AD = Dual;

template <class T>
struct ScalarTraits {
  static double value(const T& t) { return static_cast<double>(t); }
};

template <>
struct ScalarTraits<Dual> {
  static double value(const Dual& t) { return t.v; }
};

template <class T>
inline double value_of(const T& t) {
  return ScalarTraits<T>::value(t);
}

template <class T>
inline double max_abs(const Vec<T>& v) {
  double m = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) m = std::max(m, std::abs(value_of(v(i))));
  return m;
}

// Gaussian elimination with partial pivoting; works for any scalar type.
template <class T>
Vec<T> solve_small(Mat<T> A, Vec<T> b) {
  const Eigen::Index n = A.rows();
  for (Eigen::Index c = 0; c < n; ++c) {
    Eigen::Index p = c;
    for (Eigen::Index r = c + 1; r < n; ++r)
      if (std::abs(value_of(A(r, c))) > std::abs(value_of(A(p, c)))) p = r;
    if (value_of(A(p, c)) == 0.0) throw PreconditionError("singular linear system");
    if (p != c) {
      A.row(p).swap(A.row(c));
      std::swap(b(p), b(c));
    }
    for (Eigen::Index r = c + 1; r < n; ++r) {
      T f = A(r, c) / A(c, c);
      if (value_of(f) == 0.0) continue;
      for (Eigen::Index j = c; j < n; ++j) A(r, j) = A(r, j) - f * A(c, j);
      b(r) = b(r) - f * b(c);
    }
  }
  Vec<T> x(n);
  for (Eigen::Index r = n - 1; r >= 0; --r) {
    T s = b(r);
    for (Eigen::Index j = r + 1; j < n; ++j) s = s - A(r, j) * x(j);
    x(r) = s / A(r, r);
  }
  return x;
}

struct TailSpec {
  double c_g = 0.0;  // local-map tail  g(x,y,z) = c_g x^2 y1
  double c_t = 0.0;  // quadratic transition tail
};

// All data of one model cycle. Shapes (dcs, dcu, nz, nv, nw) follow from case, d and d1;
// the focus cases fold the second central coordinate into the Z-block of the return map.
struct CycleParams {
  Case kind = Case::Saddle;
  int d = 3;
  int d1 = 1;
  double lambda = 0.5;
  double gamma = 3.0;
  double omega = 0.0;
  double omega1 = 0.0;
  double omega2 = 0.0;
  Eigen::MatrixXd P1, P2, Q1, Q2;

  // F12 in cross form, unknown zeta = (u2.., w) of the image:
  //   u1 = mu + a x + a12 zeta + a13 z,  v = v+ + a21 x + a22 zeta + a23 z,
  //   y  = y- + a31 x + a32 zeta + a33 z   (all plus c_t times the squared norm of the inputs)
  Eigen::RowVectorXd a;
  Eigen::MatrixXd a12, a13, a21, a22, a23, a31, a32, a33;
  // F21 in cross form, s = u1 - u1-:
  //   x - x+ = b s + b12 v + b13 y,  zeta - zeta- = b21 s + b22 v + b23 y,
  //   z - z+ = b31 s + b32 v + b33 y
  Eigen::VectorXd b;
  Eigen::MatrixXd b12, b13, b21, b22, b23, b31, b32, b33;

  Eigen::VectorXd x_plus, z_plus, y_minus, v_plus, u_minus, w_minus;
  double mu = 0.0;
  double delta = 0.1;
  double q = 0.1;
  TailSpec tails;
  double chart_radius = 4.0;

  int dcs() const { return kind == Case::Saddle ? 1 : 2; }
  int dcu() const { return kind == Case::DoubleFocus ? 2 : 1; }
  int nz() const { return d - d1 - dcs(); }
  int nv() const { return d - d1 - 1; }
  int nw() const { return d1 + 1 - dcu(); }
  int nzeta() const { return d1; }
  double delta_prime() const { return q * delta; }
  bool focus() const { return kind != Case::Saddle; }

  double rot_stable() const { return kind == Case::DoubleFocus ? omega1 : omega; }

  Eigen::MatrixXd central_stable() const {
    if (kind == Case::Saddle) return Eigen::MatrixXd::Constant(1, 1, lambda);
    return lambda * rotation(rot_stable());
  }
  Eigen::MatrixXd central_unstable() const {
    if (kind != Case::DoubleFocus) return Eigen::MatrixXd::Constant(1, 1, gamma);
    return gamma * rotation(omega2);
  }
  Eigen::VectorXd zeta_minus() const {
    Eigen::VectorXd z(d1);
    int off = 0;
    if (kind == Case::DoubleFocus) z(off++) = u_minus(1);
    for (int i = 0; i < nw(); ++i) z(off + i) = w_minus(i);
    return z;
  }
  // Saddle alpha; NaN in the focus cases.
  double alpha() const {
    if (kind != Case::Saddle) return std::numeric_limits<double>::quiet_NaN();
    return b(0) * u_minus(0) / x_plus(0);
  }

  // R(w) = [[cos w, sin w], [-sin w, cos w]]
  static Eigen::MatrixXd rotation(double w) {
    Eigen::MatrixXd R(2, 2);
    R << std::cos(w), std::sin(w), -std::sin(w), std::cos(w);
    return R;
  }

  void fill_defaults();
  void validate() const;
};

namespace detail {

inline void default_vec(Eigen::VectorXd& v, Eigen::Index n, double fill) {
  if (v.size() == 0 && n > 0) v = Eigen::VectorXd::Constant(n, fill);
  if (n == 0) v.resize(0);
}
inline void need_shape(const Eigen::MatrixXd& m, Eigen::Index r, Eigen::Index c, const char* name) {
  if (m.rows() != r || m.cols() != c)
    throw InputError(std::string("field '") + name + "' has shape " + std::to_string(m.rows()) + "x" +
                     std::to_string(m.cols()) + ", expected " + std::to_string(r) + "x" + std::to_string(c));
}
inline double spectral_radius(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::EigenSolver<Eigen::MatrixXd>(m, false).eigenvalues().cwiseAbs().maxCoeff();
}
inline double spectral_min(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return std::numeric_limits<double>::infinity();
  return Eigen::EigenSolver<Eigen::MatrixXd>(m, false).eigenvalues().cwiseAbs().minCoeff();
}

}  // namespace detail

inline void CycleParams::fill_defaults() {
  const int cs = dcs(), Z = nz(), V = nv(), W = nw(), D1 = d1;
  if (P1.size() == 0) P1 = 2.0 * Eigen::MatrixXd::Identity(D1, D1);
  if (P2.size() == 0) P2 = 0.5 * std::abs(lambda) * Eigen::MatrixXd::Identity(Z, Z);
  if (Q1.size() == 0) Q1 = 0.25 * Eigen::MatrixXd::Identity(V, V);
  if (Q2.size() == 0) Q2 = (std::abs(gamma) + 1.0) * Eigen::MatrixXd::Identity(W, W);

  if (a12.size() == 0) a12 = Eigen::MatrixXd::Zero(1, D1);
  if (a13.size() == 0) a13 = Eigen::MatrixXd::Zero(1, Z);
  if (a21.size() == 0) {
    a21 = Eigen::MatrixXd::Zero(V, cs);
    if (focus()) a21(0, 1) = 1.0;
  }
  if (a22.size() == 0) a22 = Eigen::MatrixXd::Zero(V, D1);
  if (a23.size() == 0) {
    a23 = Eigen::MatrixXd::Zero(V, Z);
    if (focus())
      a23.bottomRows(Z) = Eigen::MatrixXd::Identity(Z, Z);
    else
      a23 = Eigen::MatrixXd::Identity(V, Z);
  }
  if (a31.size() == 0) a31 = Eigen::MatrixXd::Zero(D1, cs);
  if (a32.size() == 0) a32 = Eigen::MatrixXd::Identity(D1, D1);
  if (a33.size() == 0) a33 = Eigen::MatrixXd::Zero(D1, Z);

  if (b12.size() == 0) {
    b12 = Eigen::MatrixXd::Zero(cs, V);
    if (focus()) b12(1, 0) = 1.0;
  }
  if (b13.size() == 0) b13 = Eigen::MatrixXd::Zero(cs, D1);
  if (b21.size() == 0) b21 = Eigen::MatrixXd::Zero(D1, 1);
  if (b22.size() == 0) b22 = Eigen::MatrixXd::Zero(D1, V);
  if (b23.size() == 0) b23 = Eigen::MatrixXd::Identity(D1, D1);
  if (b31.size() == 0) b31 = Eigen::MatrixXd::Zero(Z, 1);
  if (b32.size() == 0) {
    b32 = Eigen::MatrixXd::Zero(Z, V);
    if (focus())
      b32.rightCols(Z) = Eigen::MatrixXd::Identity(Z, Z);
    else
      b32 = Eigen::MatrixXd::Identity(Z, V);
  }
  if (b33.size() == 0) b33 = Eigen::MatrixXd::Zero(Z, D1);

  detail::default_vec(z_plus, Z, 0.0);
  detail::default_vec(y_minus, D1, 1.0);
  detail::default_vec(v_plus, V, 1.0);
  detail::default_vec(w_minus, W, 0.0);
}

// Structural checks: shapes, multiplier ordering, box sizes. Degeneracy of the cycle
// itself is not an error here; see validate_nondegeneracy.
inline void CycleParams::validate() const {
  using detail::need_shape;
  if (d < 3) throw InputError("field 'd' must be >= 3");
  if (d1 < 1 || d1 > d - 2) throw InputError("field 'd1' must satisfy 1 <= d1 <= d-2");
  if (kind != Case::Saddle && nz() < 0) throw InputError("focus case needs d - d1 >= 2");
  if (kind == Case::DoubleFocus && nw() < 0) throw InputError("double focus needs d1 >= 1");
  if (d > 16) throw InputError("field 'd' must be <= 16");
  if (!(std::abs(lambda) < 1.0) || lambda == 0.0) throw InputError("field 'lambda' must satisfy 0 < |lambda| < 1");
  if (!(std::abs(gamma) > 1.0)) throw InputError("field 'gamma' must satisfy |gamma| > 1");
  if (focus() && lambda < 0) throw InputError("field 'lambda' is a modulus in the focus cases");
  if (kind == Case::DoubleFocus && gamma < 0) throw InputError("field 'gamma' is a modulus in the double-focus case");
  auto angle = [](double w, const char* n) {
    if (!(w > 0.0 && w < M_PI)) throw InputError(std::string("field '") + n + "' must lie in (0, pi)");
  };
  if (kind == Case::SaddleFocus) angle(omega, "omega");
  if (kind == Case::DoubleFocus) {
    angle(omega1, "omega1");
    angle(omega2, "omega2");
  }
  const int cs = dcs(), cu = dcu(), Z = nz(), V = nv(), W = nw(), D1 = d1;
  need_shape(P1, D1, D1, "P1");
  need_shape(P2, Z, Z, "P2");
  need_shape(Q1, V, V, "Q1");
  need_shape(Q2, W, W, "Q2");
  need_shape(a, 1, cs, "a");
  need_shape(a12, 1, D1, "a12");
  need_shape(a13, 1, Z, "a13");
  need_shape(a21, V, cs, "a21");
  need_shape(a22, V, D1, "a22");
  need_shape(a23, V, Z, "a23");
  need_shape(a31, D1, cs, "a31");
  need_shape(a32, D1, D1, "a32");
  need_shape(a33, D1, Z, "a33");
  need_shape(b, cs, 1, "b");
  need_shape(b12, cs, V, "b12");
  need_shape(b13, cs, D1, "b13");
  need_shape(b21, D1, 1, "b21");
  need_shape(b22, D1, V, "b22");
  need_shape(b23, D1, D1, "b23");
  need_shape(b31, Z, 1, "b31");
  need_shape(b32, Z, V, "b32");
  need_shape(b33, Z, D1, "b33");
  need_shape(x_plus, cs, 1, "x_plus");
  need_shape(z_plus, Z, 1, "z_plus");
  need_shape(y_minus, D1, 1, "y_minus");
  need_shape(v_plus, V, 1, "v_plus");
  need_shape(u_minus, cu, 1, "u_minus");
  need_shape(w_minus, W, 1, "w_minus");

  if (detail::spectral_radius(P2) >= std::abs(lambda)) throw InputError("field 'P2': spectrum must lie inside |z| < |lambda|");
  if (detail::spectral_min(P1) <= 1.0) throw InputError("field 'P1': spectrum must lie outside the unit circle");
  if (detail::spectral_radius(Q1) >= 1.0) throw InputError("field 'Q1': spectrum must lie inside the unit circle");
  if (detail::spectral_min(Q2) <= std::abs(gamma)) throw InputError("field 'Q2': spectrum must lie outside |z| > |gamma|");
  if (!(delta > 0.0 && delta <= 0.25)) throw InputError("field 'delta' must satisfy 0 < delta <= 0.25");
  if (!(q > 0.0 && q < 1.0)) throw InputError("field 'q' must lie in (0, 1)");
  if (!(tails.c_g >= 0.0) || !(tails.c_t >= 0.0)) throw InputError("field 'tails': coefficients must be >= 0");
  if (!(chart_radius > 0.0)) throw InputError("field 'chart_radius' must be positive");
}

// The model maps, with every matrix cast once to the working scalar.
template <class T>
struct Model {
  explicit Model(const CycleParams& p) : prm(p) {
    Lam = p.central_stable().cast<T>();
    Gam = p.central_unstable().cast<T>();
    P1 = p.P1.cast<T>();
    P2 = p.P2.cast<T>();
    Q1 = p.Q1.cast<T>();
    Q2 = p.Q2.cast<T>();
    a = p.a.cast<T>();
    a12 = p.a12.cast<T>();
    a13 = p.a13.cast<T>();
    a21 = p.a21.cast<T>();
    a22 = p.a22.cast<T>();
    a23 = p.a23.cast<T>();
    a31 = p.a31.cast<T>();
    a32 = p.a32.cast<T>();
    a33 = p.a33.cast<T>();
    b = p.b.cast<T>();
    b12 = p.b12.cast<T>();
    b13 = p.b13.cast<T>();
    b21 = p.b21.cast<T>();
    b22 = p.b22.cast<T>();
    b23 = p.b23.cast<T>();
    b31 = p.b31.cast<T>();
    b32 = p.b32.cast<T>();
    b33 = p.b33.cast<T>();
    x_plus = p.x_plus.cast<T>();
    z_plus = p.z_plus.cast<T>();
    y_minus = p.y_minus.cast<T>();
    v_plus = p.v_plus.cast<T>();
    u_minus = p.u_minus.cast<T>();
    zeta_minus = p.zeta_minus().cast<T>();
    mu = T(p.mu);
    cg = T(p.tails.c_g);
    ct = T(p.tails.c_t);
  }

  CycleParams prm;
  Mat<T> Lam, Gam, P1, P2, Q1, Q2;
  Eigen::Matrix<T, 1, Eigen::Dynamic> a;
  Mat<T> a12, a13, a21, a22, a23, a31, a32, a33;
  Vec<T> b;
  Mat<T> b12, b13, b21, b22, b23, b31, b32, b33;
  Vec<T> x_plus, z_plus, y_minus, v_plus, u_minus, zeta_minus;
  T mu, cg, ct;

  int cs() const { return prm.dcs(); }
  int cu() const { return prm.dcu(); }

  void chart(const Vec<T>& p, const char* where, int iterate) const {
    if (max_abs(p) > prm.chart_radius)
      throw ChartError(std::string(where) + ": point leaves the chart at iterate " + std::to_string(iterate), iterate);
  }
  void dims(const Vec<T>& p, const char* where) const {
    if (p.size() != prm.d)
      throw InputError(std::string(where) + ": point has dimension " + std::to_string(p.size()) + ", expected " +
                       std::to_string(prm.d));
  }

  // Local map near O1, point = [x, y, z].
  Vec<T> F1(const Vec<T>& p, int iterate = 0) const {
    dims(p, "F1");
    chart(p, "F1", iterate);
    const int c = cs(), D1 = prm.d1, Z = prm.nz();
    Vec<T> x = p.head(c), y = p.segment(c, D1), z = p.tail(Z);
    T s = cg * x(0) * x(0);
    Vec<T> out(prm.d);
    Vec<T> xb = Lam * x;
    for (int i = 0; i < c; ++i) xb(i) += cg * x(i) * x(i) * y(0);
    out.head(c) = xb;
    out.segment(c, D1) = P1 * y + s * y;
    out.tail(Z) = P2 * z + s * z;
    return out;
  }

  // Local map near O2, point = [u, v, w].
  Vec<T> F2(const Vec<T>& p, int iterate = 0) const {
    dims(p, "F2");
    chart(p, "F2", iterate);
    const int c = cu(), V = prm.nv(), W = prm.nw();
    Vec<T> u = p.head(c), v = p.segment(c, V), w = p.tail(W);
    T s = cg * u(0) * u(0);
    Vec<T> out(prm.d);
    Vec<T> ub = Gam * u;
    for (int i = 0; i < c; ++i) ub(i) += cg * u(i) * u(i) * v(0);
    out.head(c) = ub;
    out.segment(c, V) = Q1 * v + s * v;
    out.tail(W) = Q2 * w + s * w;
    return out;
  }

  T tail12(const Vec<T>& x, const Vec<T>& zeta, const Vec<T>& z) const {
    return ct * (x.squaredNorm() + zeta.squaredNorm() + z.squaredNorm());
  }
  T tail21(const T& s, const Vec<T>& v, const Vec<T>& y) const {
    return ct * (s * s + v.squaredNorm() + y.squaredNorm());
  }

  struct Cross12 {
    T u1;
    Vec<T> v, y;
  };
  Cross12 F12_cross(const Vec<T>& x, const Vec<T>& zeta, const Vec<T>& z) const {
    T t = tail12(x, zeta, z);
    Cross12 r;
    r.u1 = mu + (a * x)(0) + (a12 * zeta)(0) + (a13 * z)(0) + t;
    r.v = v_plus + a21 * x + a22 * zeta + a23 * z;
    r.v.array() += t;
    r.y = y_minus + a31 * x + a32 * zeta + a33 * z;
    r.y.array() += t;
    return r;
  }

  struct Cross21 {
    Vec<T> x, zeta, z;
  };
  Cross21 F21_cross(const T& s, const Vec<T>& v, const Vec<T>& y) const {
    T t = tail21(s, v, y);
    Cross21 r;
    r.x = x_plus + b * s + b12 * v + b13 * y;
    r.x.array() += t;
    r.zeta = zeta_minus + b21 * s + b22 * v + b23 * y;
    r.zeta.array() += t;
    r.z = z_plus + b31 * s + b32 * v + b33 * y;
    r.z.array() += t;
    return r;
  }

  // Newton for M zeta + c_t |zeta|^2 1 = rhs - c_t c0, i.e. zeta solves the y-row of F12.
  static Vec<T> newton_quadratic(const Mat<T>& M, const T& ct_, const T& c0, const Vec<T>& rhs, const char* where) {
    const Eigen::Index n = M.rows();
    Vec<T> z = solve_small<T>(M, Vec<T>(rhs - Vec<T>::Constant(n, ct_ * c0)));
    if (value_of(ct_) == 0.0) return z;
    int extra = 0;
    for (int it = 0; it < 100; ++it) {
      Vec<T> res = M * z - rhs;
      res.array() += ct_ * (c0 + z.squaredNorm());
      Mat<T> J = M;
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) J(i, j) += T(2.0) * ct_ * z(j);
      Vec<T> dz = solve_small<T>(J, res);
      z -= dz;
      if (max_abs(dz) <= 1e-15 * (1.0 + max_abs(z))) {
        if (++extra >= 2) return z;
      }
    }
    throw ConvergenceError(std::string(where) + ": Newton iteration did not converge");
  }

  // Explicit transition near M1- -> near M2+.
  Vec<T> F12(const Vec<T>& p, int iterate = 0) const {
    dims(p, "F12");
    chart(p, "F12", iterate);
    const int c = cs(), D1 = prm.d1, Z = prm.nz(), V = prm.nv(), W = prm.nw();
    Vec<T> x = p.head(c), y = p.segment(c, D1), z = p.tail(Z);
    Vec<T> rhs = y - y_minus - a31 * x - a33 * z;
    Vec<T> zeta = newton_quadratic(a32, ct, x.squaredNorm() + z.squaredNorm(), rhs, "F12");
    Cross12 r = F12_cross(x, zeta, z);
    Vec<T> out(prm.d);
    out(0) = r.u1;
    int off = 0;
    if (cu() == 2) out(1) = zeta(off++);
    out.segment(cu(), V) = r.v;
    out.tail(W) = zeta.tail(W);
    return out;
  }

  // Explicit transition near M2- -> near M1+.
  Vec<T> F21(const Vec<T>& p, int iterate = 0) const {
    dims(p, "F21");
    chart(p, "F21", iterate);
    const int c = cu(), V = prm.nv(), W = prm.nw(), D1 = prm.d1, Z = prm.nz();
    T s = p(0) - u_minus(0);
    Vec<T> v = p.segment(c, V);
    Vec<T> zeta(D1);
    int off = 0;
    if (c == 2) zeta(off++) = p(1);
    zeta.tail(W) = p.tail(W);
    Vec<T> rhs = zeta - zeta_minus - b21 * s - b22 * v;
    Vec<T> y = newton_quadratic(b23, ct, s * s + v.squaredNorm(), rhs, "F21");
    Cross21 r = F21_cross(s, v, y);
    Vec<T> out(prm.d);
    out.head(cs()) = r.x;
    out.segment(cs(), D1) = y;
    out.tail(Z) = r.z;
    return out;
  }
};

// Public evaluators (double).
inline Eigen::VectorXd local_map_F1(const Eigen::VectorXd& p, const CycleParams& prm) {
  return Model<double>(prm).F1(p);
}
inline Eigen::VectorXd local_map_F2(const Eigen::VectorXd& p, const CycleParams& prm) {
  return Model<double>(prm).F2(p);
}
inline Eigen::VectorXd transition_F12(const Eigen::VectorXd& p, const CycleParams& prm) {
  return Model<double>(prm).F12(p);
}
inline Eigen::VectorXd transition_F21(const Eigen::VectorXd& p, const CycleParams& prm) {
  return Model<double>(prm).F21(p);
}

// Inverse of F1 by Newton on the central block; y and z are then explicit.
inline Eigen::VectorXd local_map_F1_inverse(const Eigen::VectorXd& pbar, const CycleParams& prm) {
  Model<double> M(prm);
  M.dims(pbar, "F1^-1");
  const int c = prm.dcs(), D1 = prm.d1, Z = prm.nz();
  Eigen::VectorXd xb = pbar.head(c), yb = pbar.segment(c, D1), zb = pbar.tail(Z);
  const double cg = prm.tails.c_g;
  auto yz = [&](const Eigen::VectorXd& x, Eigen::VectorXd& y, Eigen::VectorXd& z) {
    double s = cg * x(0) * x(0);
    y = (M.P1 + s * Eigen::MatrixXd::Identity(D1, D1)).partialPivLu().solve(yb);
    z = Z ? Eigen::VectorXd((M.P2 + s * Eigen::MatrixXd::Identity(Z, Z)).partialPivLu().solve(zb)) : Eigen::VectorXd();
  };
  Eigen::VectorXd x = M.Lam.partialPivLu().solve(xb), y, z;
  for (int it = 0; it < 100; ++it) {
    Eigen::Matrix<AD, Eigen::Dynamic, 1> xa(c);
    for (int i = 0; i < c; ++i) xa(i) = AD(x(i), c, i);
    AD s = AD(cg) * xa(0) * xa(0);
    Mat<AD> PA = M.P1.cast<AD>();
    for (int i = 0; i < D1; ++i) PA(i, i) += s;
    Vec<AD> ya = solve_small<AD>(PA, yb.cast<AD>());
    Eigen::Matrix<AD, Eigen::Dynamic, 1> r = M.Lam.cast<AD>() * xa - xb.cast<AD>();
    for (int i = 0; i < c; ++i) r(i) += AD(cg) * xa(i) * xa(i) * ya(0);
    Eigen::MatrixXd J(c, c);
    Eigen::VectorXd rv(c);
    for (int i = 0; i < c; ++i) {
      rv(i) = r(i).value();
      J.row(i) = r(i).derivatives().transpose();
    }
    Eigen::VectorXd dx = J.partialPivLu().solve(rv);
    x -= dx;
    if (dx.lpNorm<Eigen::Infinity>() <= 1e-16 * (1.0 + x.lpNorm<Eigen::Infinity>())) break;
    if (it == 99) throw ConvergenceError("F1^-1: Newton iteration did not converge");
  }
  yz(x, y, z);
  Eigen::VectorXd p(prm.d);
  p << x, y, z;
  M.chart(p, "F1^-1", 0);
  return p;
}

struct NondegeneracyReport {
  bool C1 = false, C2 = false, C3 = false;
  bool C4 = false;           // C4.1 in the saddle case, C4.2 in the focus cases
  std::string C4_label;      // "C4.1" or "C4.2"
  double a_norm = 0, b_norm = 0;
  double det_a32 = 0, det_b23 = 0;
  double x_plus_norm = 0, u_minus_norm = 0;
  double alpha = std::numeric_limits<double>::quiet_NaN();
  double tan_eta1 = std::numeric_limits<double>::quiet_NaN();
  double tan_eta2 = std::numeric_limits<double>::quiet_NaN();
  double parallel_witness = std::numeric_limits<double>::quiet_NaN();   // b11 x2+ - b21 x1+
  double df_witness = std::numeric_limits<double>::quiet_NaN();         // u2- - b41 u1-
  bool all() const { return C1 && C2 && C3 && C4; }
};

inline NondegeneracyReport validate_nondegeneracy(const CycleParams& p) {
  NondegeneracyReport r;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto det = [](const Eigen::MatrixXd& m) { return m.rows() == m.cols() && m.size() ? m.determinant() : 0.0; };
  r.det_a32 = det(p.a32);
  r.det_b23 = det(p.b23);
  r.a_norm = p.a.size() ? p.a.norm() : 0.0;
  r.b_norm = p.b.size() ? p.b.norm() : 0.0;
  r.x_plus_norm = p.x_plus.size() ? p.x_plus.norm() : 0.0;
  r.u_minus_norm = p.u_minus.size() ? p.u_minus.norm() : 0.0;
  r.C1 = r.det_a32 != 0.0 && r.a_norm != 0.0;
  r.C3 = r.x_plus_norm != 0.0 && r.u_minus_norm != 0.0;
  if (p.kind == Case::Saddle) {
    r.C2 = r.det_b23 != 0.0 && p.b.size() && p.b(0) != 0.0;
    r.C4_label = "C4.1";
    r.alpha = (p.x_plus.size() && p.x_plus(0) != 0.0 && p.b.size() && p.u_minus.size()) ? p.alpha() : nan;
    r.C4 = std::isfinite(r.alpha) && std::abs(r.alpha) != 1.0;
  } else {
    r.C2 = r.det_b23 != 0.0 && p.b.size() == 2 && p.b(0) != 0.0;
    r.C4_label = "C4.2";
    if (p.b.size() == 2 && p.x_plus.size() == 2) {
      const double b11 = p.b(0), b21 = p.b(1);
      const double a11 = p.a.size() == 2 ? p.a(0) : nan, a12 = p.a.size() == 2 ? p.a(1) : nan;
      const double x1 = p.x_plus(0), x2 = p.x_plus(1);
      r.tan_eta1 = (a11 * b11 + a12 * b21) / (a11 * b21 - a12 * b11);
      r.tan_eta2 = (a11 * x1 + a12 * x2) / (a11 * x2 - a12 * x1);
      r.parallel_witness = b11 * p.x_plus(1) - b21 * p.x_plus(0);
      r.C4 = r.parallel_witness != 0.0;
    }
    if (p.kind == Case::DoubleFocus && p.u_minus.size() == 2 && p.b21.rows() >= 1) {
      r.df_witness = p.u_minus(1) - p.b21(0, 0) * p.u_minus(0);
      r.C4 = r.C4 && r.df_witness != 0.0;
    }
  }
  return r;
}

}  // namespace blab
