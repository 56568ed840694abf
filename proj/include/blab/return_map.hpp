#pragma once

#include "blab/cycle_model.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace blab {

inline Eigen::MatrixXd mat_pow(Eigen::MatrixXd M, long n) {
  Eigen::MatrixXd R = Eigen::MatrixXd::Identity(M.rows(), M.cols());
  if (n < 0) {
    M = M.inverse();
    n = -n;
  }
  while (n > 0) {
    if (n & 1) R = R * M;
    M = M * M;
    n >>= 1;
  }
  return R;
}

// lambda^k gamma^m through logarithms, sign tracked separately.
inline long double power_product(double lambda, double gamma, long k, long m) {
  long double lg = k * std::log(std::fabs(static_cast<long double>(lambda))) +
                   m * std::log(std::fabs(static_cast<long double>(gamma)));
  long double v = std::exp(lg);
  bool neg = (lambda < 0 && (k & 1)) != (gamma < 0 && (m & 1));
  return neg ? -v : v;
}

// Box coordinates near M1+ : vector [X, Y(d1), Zb(nv)], Zb = (X2, Z) in the focus cases.
template <class T>
struct BoxChart {
  const Model<T>& M;
  T sqd, ratio, zr;  // sqrt(delta), b21/b11, b31/b1 row factor

  explicit BoxChart(const Model<T>& model) : M(model) {
    const CycleParams& p = M.prm;
    sqd = T(std::sqrt(p.delta));
    ratio = p.focus() ? T(p.b(1) / p.b(0)) : T(0.0);
    zr = T(1.0 / p.b(0));
  }

  void to_physical(const T& X, const Vec<T>& Zb, const Vec<T>& y, Vec<T>& x, Vec<T>& z) const {
    const CycleParams& p = M.prm;
    Vec<T> e(p.dcs());
    e(0) = X;
    if (p.focus()) e(1) = sqd * Zb(0) + ratio * X;
    x = M.x_plus + M.b13 * y + e;
    Vec<T> Zp = Zb.tail(p.nz());
    z = M.z_plus + M.b31 * (zr * X) + M.b33 * y + Zp;
  }

  void to_box(const Vec<T>& x, const Vec<T>& y, const Vec<T>& z, T& X, Vec<T>& Zb) const {
    const CycleParams& p = M.prm;
    Vec<T> e = x - M.x_plus - M.b13 * y;
    X = e(0);
    Zb.resize(p.nv());
    int off = 0;
    if (p.focus()) Zb(off++) = (e(1) - ratio * e(0)) / sqd;
    Zb.tail(p.nz()) = z - M.z_plus - M.b31 * (zr * X) - M.b33 * y;
  }
};

inline bool in_box(const Eigen::VectorXd& v, double delta) {
  return v.lpNorm<Eigen::Infinity>() <= delta;
}

// Literal composition F21 o F2^m o F12 o F1^k in box coordinates: [X, Y, Zb] -> [Xbar, Ybar, Zbbar].
template <class T>
class ComposeEvaluator {
 public:
  ComposeEvaluator(const CycleParams& p, int k, int m) : M_(p), k_(k), m_(m) {
    if (k < 1 || m < 1) throw PreconditionError("compose_T_km: k and m must be >= 1");
  }

  Vec<T> operator()(const Vec<T>& in) const {
    const CycleParams& p = M_.prm;
    if (in.size() != p.d) throw InputError("compose_T_km: input has wrong dimension");
    BoxChart<T> box(M_);
    const int cs = p.dcs(), D1 = p.d1, Z = p.nz();
    Vec<T> y = in.segment(1, D1), x, z;
    box.to_physical(in(0), Vec<T>(in.tail(p.nv())), y, x, z);
    Vec<T> pt(p.d);
    pt << x, y, z;
    int it = 0;
    for (int i = 0; i < k_; ++i) pt = M_.F1(pt, it++);
    pt = M_.F12(pt, it++);
    for (int j = 0; j < m_; ++j) pt = M_.F2(pt, it++);
    pt = M_.F21(pt, it++);
    M_.chart(pt, "compose_T_km", it);
    Vec<T> xb = pt.head(cs), yb = pt.segment(cs, D1), zb = pt.tail(Z);
    T Xb;
    Vec<T> Zbb;
    box.to_box(xb, yb, zb, Xb, Zbb);
    Vec<T> out(p.d);
    out(0) = Xb;
    out.segment(1, D1) = yb;
    out.tail(p.nv()) = Zbb;
    return out;
  }

  int k() const { return k_; }
  int m() const { return m_; }

 private:
  Model<T> M_;
  int k_, m_;
};

inline ComposeEvaluator<double> compose_T_km(const CycleParams& p, int k, int m) {
  return ComposeEvaluator<double>(p, k, m);
}

struct ReturnCoeffs {
  int k = 0, m = 0;
  Case kind = Case::Saddle;
  double A_km = 0, B_km = 0;
  double A = std::numeric_limits<double>::quiet_NaN();
  double B = std::numeric_limits<double>::quiet_NaN();
  double C = std::numeric_limits<double>::quiet_NaN();
  double D = std::numeric_limits<double>::quiet_NaN();
  double eta1 = std::numeric_limits<double>::quiet_NaN();
  double eta2 = std::numeric_limits<double>::quiet_NaN();
  double eta3 = std::numeric_limits<double>::quiet_NaN();
  bool balanced = false;  // |B_km| <= delta

  double R(double X) const { return A_km * X + B_km; }
};

inline ReturnCoeffs return_coeffs(const CycleParams& p, int k, int m) {
  if (k < 1 || m < 1) throw PreconditionError("return_coeffs: k and m must be >= 1");
  ReturnCoeffs rc;
  rc.k = k;
  rc.m = m;
  rc.kind = p.kind;
  const long double lg = power_product(p.lambda, p.gamma, k, m);
  const double gm = static_cast<double>(power_product(1.0, p.gamma, 0, m));
  if (p.kind == Case::Saddle) {
    const double a = p.a(0), b = p.b(0);
    long double Akm = static_cast<long double>(a) * b * lg;
    rc.A_km = static_cast<double>(Akm);
    rc.B_km = static_cast<double>(Akm * p.x_plus(0) - static_cast<long double>(b) * p.u_minus(0) +
                                  static_cast<long double>(b) * gm * p.mu);
  } else {
    const double a11 = p.a(0), a12 = p.a(1), b11 = p.b(0), b21 = p.b(1);
    const double x1 = p.x_plus(0), x2 = p.x_plus(1);
    const double amp1 = std::sqrt((a11 * a11 + a12 * a12) * (b11 * b11 + b21 * b21));
    const double amp2 = std::fabs(b11) * p.x_plus.norm() * std::sqrt(a11 * a11 + a12 * a12);
    rc.eta1 = std::atan2(a11 * b11 + a12 * b21, a11 * b21 - a12 * b11);
    rc.eta2 = std::atan2(b11 * (a11 * x1 + a12 * x2), b11 * (a11 * x2 - a12 * x1));
    const double w = p.rot_stable();
    const long double s1 = std::sin(std::fmod(static_cast<long double>(k) * w, 2.0L * M_PIl) + rc.eta1);
    const long double s2 = std::sin(std::fmod(static_cast<long double>(k) * w, 2.0L * M_PIl) + rc.eta2);
    if (p.kind == Case::SaddleFocus) {
      rc.A = amp1;
      rc.B = amp2;
      rc.A_km = static_cast<double>(lg * amp1 * s1);
      rc.B_km = static_cast<double>(lg * amp2 * s2 - static_cast<long double>(b11) * p.u_minus(0) +
                                    static_cast<long double>(b11) * gm * p.mu);
    } else {
      const double a14 = p.a12(0, 0), b41 = p.b21(0, 0);
      const double r = std::sqrt(1.0 + a14 * a14);
      rc.C = amp1;
      rc.D = amp2;
      rc.eta3 = std::atan(a14);
      const long double th3 = std::fmod(static_cast<long double>(m) * p.omega2, 2.0L * M_PIl) + rc.eta3;
      const long double den = std::cos(th3) - b41 * std::sin(th3);
      rc.A = amp1 / r;
      rc.B = amp2 / r;
      rc.A_km = static_cast<double>(lg * amp1 * s1 / (r * den));
      rc.B_km = static_cast<double>((lg * amp2 * s2 / r +
                                     b11 * (p.u_minus(1) * std::sin(th3) - p.u_minus(0) * std::cos(th3)) +
                                     static_cast<long double>(b11) * gm * p.mu / r) /
                                    den);
    }
  }
  rc.balanced = std::fabs(rc.B_km) <= p.delta;
  return rc;
}

// The return map in cross form: [X, Ybar, Zb] -> [Xbar, Y, Zbbar]. The two free unknowns
// (Y at the start and zeta at the entry to U02) are found by sweeping the orbit segments
// until they stop changing, so the result is the exact composition, tails included.
// The orbit pieces scale like lambda^k and gamma^m; both must stay representable.
inline bool in_double_range(const CycleParams& p, long k, long m) {
  const long double lk = k * std::log(std::fabs(static_cast<long double>(p.lambda)));
  const long double gm = m * std::log(std::fabs(static_cast<long double>(p.gamma)));
  return lk > -690.0L && gm < 690.0L;
}

template <class T>
class CrossEvaluator {
 public:
  struct Out {
    Vec<T> v;
    bool in_box = false;
    int iterations = 0;
  };

  CrossEvaluator(const CycleParams& p, int k, int m) : M_(p), k_(k), m_(m) {
    if (k < 1 || m < 1) throw PreconditionError("cross_map_T_km: k and m must be >= 1");
    if (!in_double_range(p, k, m))
      throw PreconditionError("cross_map_T_km: (k,m) = (" + std::to_string(k) + "," + std::to_string(m) +
                              ") puts lambda^k or gamma^m outside double range");
    fast_ = p.tails.c_g == 0.0;
    const Eigen::MatrixXd L = p.central_stable();
    Eigen::MatrixXd Lk;
    if (p.kind == Case::Saddle)
      Lk = Eigen::MatrixXd::Constant(1, 1, static_cast<double>(power_product(p.lambda, 1.0, k, 0)));
    else
      Lk = static_cast<double>(power_product(p.lambda, 1.0, k, 0)) *
           CycleParams::rotation(std::fmod(static_cast<double>(k) * p.rot_stable(), 2 * M_PI));
    Eigen::MatrixXd Gm;
    if (p.kind == Case::DoubleFocus)
      Gm = static_cast<double>(power_product(1.0, p.gamma, 0, m)) *
           CycleParams::rotation(std::fmod(static_cast<double>(m) * p.omega2, 2 * M_PI));
    else
      Gm = Eigen::MatrixXd::Constant(1, 1, static_cast<double>(power_product(1.0, p.gamma, 0, m)));
    Lk_ = Lk.cast<T>();
    Gm_ = Gm.cast<T>();
    P1ik_ = mat_pow(p.P1, -k).cast<T>();
    P2k_ = mat_pow(p.P2, k).cast<T>();
    Q1m_ = mat_pow(p.Q1, m).cast<T>();
    Q2im_ = p.nw() ? Eigen::MatrixXd(mat_pow(p.Q2, -m)).cast<T>() : Mat<T>(0, 0);
    P1i_ = p.P1.inverse().cast<T>();
    if (p.kind == Case::DoubleFocus) {
      const double th3 = std::fmod(static_cast<double>(m) * p.omega2, 2 * M_PI) + std::atan(p.a12(0, 0));
      const double c = std::cos(th3), s = std::sin(th3);
      if (std::fabs(c) < 1e-6 || std::fabs(c - p.b21(0, 0) * s) < 1e-6)
        throw PreconditionError("cross_map_T_km: cos(m*omega2 + eta3) too close to zero (tangent singularity)");
    }
  }

  int k() const { return k_; }
  int m() const { return m_; }
  const CycleParams& params() const { return M_.prm; }

  Vec<T> operator()(const Vec<T>& in) const {
    check_box(in);
    return eval_unchecked(in).v;
  }

  void check_box(const Vec<T>& in) const {
    if (in.size() != M_.prm.d) throw InputError("cross_map_T_km: input has wrong dimension");
    if (max_abs(in) > M_.prm.delta)
      throw PreconditionError("cross_map_T_km: input outside the box (max |coord| = " + std::to_string(max_abs(in)) +
                              " > delta = " + std::to_string(M_.prm.delta) + ")");
  }

  Out eval_unchecked(const Vec<T>& in) const {
    const CycleParams& p = M_.prm;
    const int D1 = p.d1, V = p.nv(), W = p.nw(), Z = p.nz(), cs = p.dcs(), cu = p.dcu();
    const bool df = p.kind == Case::DoubleFocus;
    BoxChart<T> box(M_);
    const T X = in(0);
    const Vec<T> Ybar = in.segment(1, D1);
    const Vec<T> Zb = in.tail(V);

    Vec<T> Y0 = Vec<T>::Zero(D1), zeta = Vec<T>::Zero(D1);
    std::vector<Vec<T>> xs, ys, zs, us, vs;
    if (!fast_) {
      xs.resize(k_ + 1);
      zs.resize(k_ + 1);
      ys.resize(k_ + 1);
      us.resize(m_ + 1);
      vs.resize(m_ + 1);
      ys[k_] = M_.y_minus;
      for (int i = k_ - 1; i >= 0; --i) ys[i] = P1i_ * ys[i + 1];
    }
    T u2 = T(0.0);

    Vec<T> xbar, zbar, ztil;
    int extra = -1, it = 0;
    for (; it < 400; ++it) {
      Vec<T> x0, z0;
      box.to_physical(X, Zb, Y0, x0, z0);
      Vec<T> xk, zk;
      if (fast_) {
        xk = Lk_ * x0;
        zk = P2k_ * z0;
      } else {
        xs[0] = x0;
        zs[0] = z0;
        for (int i = 0; i < k_; ++i) {
          T s = M_.cg * xs[i](0) * xs[i](0);
          Vec<T> xn = M_.Lam * xs[i];
          for (int c = 0; c < cs; ++c) xn(c) += M_.cg * xs[i](c) * xs[i](c) * ys[i](0);
          xs[i + 1] = xn;
          zs[i + 1] = M_.P2 * zs[i] + s * zs[i];
          if (std::max({max_abs(xn), max_abs(zs[i + 1]), max_abs(ys[i + 1])}) > p.chart_radius)
            throw ChartError("cross_map_T_km: orbit leaves the chart at iterate " + std::to_string(i + 1), i + 1);
        }
        xk = xs[k_];
        zk = zs[k_];
      }

      // u2 (double focus) is pinned by the requirement that the m-th iterate lands on F21's domain slice.
      auto run_u = [&](const T& u2c, Vec<T>& um, Vec<T>& vm, typename Model<T>::Cross12& c12) {
        Vec<T> zt = zeta;
        if (df) zt(0) = u2c;
        c12 = M_.F12_cross(xk, zt, zk);
        Vec<T> u0(cu);
        u0(0) = c12.u1;
        if (df) u0(1) = u2c;
        if (fast_) {
          um = Gm_ * u0;
          vm = Q1m_ * c12.v;
        } else {
          us[0] = u0;
          vs[0] = c12.v;
          for (int j = 0; j < m_; ++j) {
            T s = M_.cg * us[j](0) * us[j](0);
            Vec<T> un = M_.Gam * us[j];
            for (int c = 0; c < cu; ++c) un(c) += M_.cg * us[j](c) * us[j](c) * vs[j](0);
            us[j + 1] = un;
            vs[j + 1] = M_.Q1 * vs[j] + s * vs[j];
            if (std::max(max_abs(un), max_abs(vs[j + 1])) > p.chart_radius)
              throw ChartError("cross_map_T_km: orbit leaves the chart at iterate " + std::to_string(k_ + 1 + j),
                               k_ + 1 + j);
          }
          um = us[m_];
          vm = vs[m_];
        }
      };
      Vec<T> um, vm;
      typename Model<T>::Cross12 c12;
      typename Model<T>::Cross21 c21;
      auto residual = [&](const T& u2c) {
        run_u(u2c, um, vm, c12);
        c21 = M_.F21_cross(um(0) - M_.u_minus(0), vm, Ybar);
        return df ? T(um(1) - c21.zeta(0)) : T(0.0);
      };
      if (df) {
        T ua = u2, ra = residual(ua);
        T ub = ua + T(1e-6 * (std::fabs(value_of(ua)) + std::pow(std::fabs(p.gamma), -m_)));
        int ex = -1;
        for (int s = 0; s < 100; ++s) {
          T rb = residual(ub);
          if (value_of(rb) == value_of(ra)) break;
          T un = ub - rb * (ub - ua) / (rb - ra);
          ua = ub;
          ra = rb;
          ub = un;
          if (std::fabs(value_of(ub) - value_of(ua)) <= 1e-15 * std::fabs(value_of(ub)) + 1e-300) {
            if (++ex >= 2) break;
          }
        }
        u2 = ub;
        residual(u2);
      } else {
        residual(T(0.0));
      }
      (void)c12;

      // backward sweeps for y and w
      Vec<T> Y0n;
      if (fast_) {
        Y0n = P1ik_ * c12.y;
      } else {
        ys[k_] = c12.y;
        for (int i = k_ - 1; i >= 0; --i) {
          T s = M_.cg * xs[i](0) * xs[i](0);
          Mat<T> A = M_.P1;
          for (int r = 0; r < D1; ++r) A(r, r) += s;
          ys[i] = solve_small<T>(A, ys[i + 1]);
        }
        Y0n = ys[0];
      }
      Vec<T> wt = c21.zeta.tail(W), w0;
      if (fast_ || W == 0) {
        w0 = W ? Vec<T>(Q2im_ * wt) : Vec<T>(0);
      } else {
        Vec<T> w = wt;
        for (int j = m_ - 1; j >= 0; --j) {
          T s = M_.cg * us[j](0) * us[j](0);
          Mat<T> A = M_.Q2;
          for (int r = 0; r < W; ++r) A(r, r) += s;
          w = solve_small<T>(A, w);
        }
        w0 = w;
      }
      Vec<T> zn(D1);
      int off = 0;
      if (df) zn(off++) = u2;
      zn.tail(W) = w0;

      double change = 0;
      for (int i = 0; i < D1; ++i) {
        change = std::max(change, std::fabs(value_of(Y0n(i)) - value_of(Y0(i))) /
                                      (std::fabs(value_of(Y0n(i))) + 1e-300));
        change = std::max(change, std::fabs(value_of(zn(i)) - value_of(zeta(i))) /
                                      (std::fabs(value_of(zn(i))) + 1e-300));
      }
      Y0 = Y0n;
      zeta = zn;
      xbar = c21.x;
      zbar = c21.z;
      if (extra >= 0) {
        if (++extra >= 2) break;
      } else if (change <= 1e-14) {
        extra = 0;
      }
    }
    if (it >= 400) throw ConvergenceError("cross_map_T_km: boundary-value sweep did not converge for (k,m)=(" +
                                          std::to_string(k_) + "," + std::to_string(m_) + ")");
    (void)Z;
    T Xb;
    Vec<T> Zbb;
    box.to_box(xbar, Ybar, zbar, Xb, Zbb);
    Out o;
    o.v.resize(p.d);
    o.v(0) = Xb;
    o.v.segment(1, D1) = Y0;
    o.v.tail(V) = Zbb;
    o.in_box = max_abs(o.v) <= p.delta;
    o.iterations = it;
    return o;
  }

 private:
  Model<T> M_;
  int k_, m_;
  bool fast_;
  Mat<T> Lk_, Gm_, P1ik_, P2k_, Q1m_, Q2im_, P1i_;
};

// Double-valued cross evaluator plus its analytic (forward-mode) Jacobian.
class CrossMap {
 public:
  CrossMap(const CycleParams& p, int k, int m) : d_(p, k, m), ad_(p, k, m), coeffs_(return_coeffs(p, k, m)) {}

  Eigen::VectorXd operator()(const Eigen::VectorXd& in) const { return d_(in); }
  CrossEvaluator<double>::Out eval_unchecked(const Eigen::VectorXd& in) const { return d_.eval_unchecked(in); }
  bool contains(const Eigen::VectorXd& in) const { return in_box(in, d_.params().delta); }

  Eigen::MatrixXd jacobian(const Eigen::VectorXd& in) const {
    d_.check_box(in);
    return jacobian_unchecked(in);
  }
  Eigen::MatrixXd jacobian_unchecked(const Eigen::VectorXd& in) const {
    const Eigen::Index n = in.size();
    Vec<AD> a(n);
    for (Eigen::Index i = 0; i < n; ++i) a(i) = AD(in(i), static_cast<int>(n), static_cast<int>(i));
    Vec<AD> out = ad_.eval_unchecked(a).v;
    Eigen::MatrixXd J(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (out(i).derivatives().size() == 0)
        J.row(i).setZero();
      else
        J.row(i) = out(i).derivatives().transpose();
    }
    return J;
  }

  const ReturnCoeffs& coeffs() const { return coeffs_; }
  bool balanced() const { return coeffs_.balanced; }
  int k() const { return d_.k(); }
  int m() const { return d_.m(); }
  const CycleParams& params() const { return d_.params(); }

 private:
  CrossEvaluator<double> d_;
  CrossEvaluator<AD> ad_;
  ReturnCoeffs coeffs_;
};

inline CrossMap cross_map_T_km(const CycleParams& p, int k, int m) { return CrossMap(p, k, m); }

struct Coding {
  std::vector<std::pair<int, int>> pairs;
  bool periodic = false;
};

struct CodingOrbit {
  std::vector<Eigen::VectorXd> points;  // box vectors [X, Y, Zb]
  int sweeps = 0;
  double lipschitz = 0;   // measured ratio of successive sweep differences
  double residual_xz = 0; // |compose(M_s) - M_{s+1}| in the X and Zb blocks
  double residual_y = 0;  // same in the Y block (amplified by the expanding y/w directions)
};

inline CodingOrbit solve_coding(const CycleParams& p, const Coding& coding, double tol = 1e-12, int max_sweeps = 10000) {
  if (coding.pairs.empty()) throw PreconditionError("solve_coding: empty coding");
  const int L = static_cast<int>(coding.pairs.size());
  std::vector<CrossMap> maps;
  maps.reserve(L);
  for (auto [k, m] : coding.pairs) {
    maps.emplace_back(p, k, m);
    if (std::fabs(maps.back().coeffs().A_km) >= 1.0)
      throw PreconditionError("solve_coding: |A_km| >= 1 for (" + std::to_string(k) + "," + std::to_string(m) +
                              "), the central direction does not contract");
  }
  const int D1 = p.d1, V = p.nv();
  const int npts = coding.periodic ? L : L + 1;
  std::vector<double> X(npts, 0.0);
  std::vector<Eigen::VectorXd> Y(npts, Eigen::VectorXd::Zero(D1)), Zb(npts, Eigen::VectorXd::Zero(V));
  auto idx = [&](int s) { return coding.periodic ? ((s % L) + L) % L : s; };
  auto input = [&](int s) {
    Eigen::VectorXd in(p.d);
    in(0) = X[idx(s)];
    in.segment(1, D1) = Y[idx(s + 1)];
    in.tail(V) = Zb[idx(s)];
    return in;
  };

  CodingOrbit orbit;
  double prev = -1, ratio = 0;
  int growing = 0;
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    double diff = 0;
    for (int s = 0; s < L; ++s) {
      Eigen::VectorXd o = maps[s](input(s));
      const int t = idx(s + 1);
      diff = std::max(diff, std::fabs(o(0) - X[t]));
      diff = std::max(diff, (o.tail(V) - Zb[t]).lpNorm<Eigen::Infinity>());
      X[t] = o(0);
      Zb[t] = o.tail(V);
    }
    for (int s = L - 1; s >= 0; --s) {
      Eigen::VectorXd o = maps[s](input(s));
      diff = std::max(diff, (o.segment(1, D1) - Y[idx(s)]).lpNorm<Eigen::Infinity>());
      Y[idx(s)] = o.segment(1, D1);
    }
    if (prev > 0) {
      ratio = diff / prev;
      growing = ratio >= 1.0 ? growing + 1 : 0;
      if (growing >= 5)
        throw ConvergenceError("solve_coding: sweep map is not contracting (measured Lipschitz estimate " +
                               std::to_string(ratio) + ")");
    }
    if (diff > 0) prev = diff;
    orbit.sweeps = sweep;
    orbit.lipschitz = std::max(orbit.lipschitz, prev > 0 && ratio > 0 ? ratio : 0.0);
    if (diff < tol) break;
    if (sweep == max_sweeps) throw ConvergenceError("solve_coding: no convergence within the sweep cap");
  }
  for (int s = 0; s < npts; ++s) {
    Eigen::VectorXd pt(p.d);
    pt(0) = X[s];
    pt.segment(1, D1) = Y[s];
    pt.tail(V) = Zb[s];
    orbit.points.push_back(pt);
  }
  for (int s = 0; s < L; ++s) {
    auto [k, m] = coding.pairs[s];
    Eigen::VectorXd img = compose_T_km(p, k, m)(orbit.points[s]);
    const Eigen::VectorXd& nxt = orbit.points[idx(s + 1)];
    orbit.residual_xz = std::max(orbit.residual_xz, std::fabs(img(0) - nxt(0)));
    orbit.residual_xz = std::max(orbit.residual_xz, (img.tail(V) - nxt.tail(V)).lpNorm<Eigen::Infinity>());
    orbit.residual_y = std::max(orbit.residual_y, (img.segment(1, D1) - nxt.segment(1, D1)).lpNorm<Eigen::Infinity>());
  }
  return orbit;
}

struct FixedPoint {
  Eigen::VectorXd point;
  double multiplier = 0;     // central eigenvalue of DT from the cross-form Jacobian
  double multiplier_fd = 0;  // d Xbar / d X of the literal composition, central differences
  double A_km = 0;
};

// Central eigenvalue of DT from the cross-form Jacobian J (rows Xbar, Y, Zbbar; cols X, Ybar, Zb).
inline double central_multiplier(const Eigen::MatrixXd& J, int d1) {
  const Eigen::Index n = J.rows(), nz = n - 1 - d1;
  auto JXX = J(0, 0);
  Eigen::RowVectorXd JXY = J.block(0, 1, 1, d1), JXZ = J.block(0, 1 + d1, 1, nz);
  Eigen::VectorXd JYX = J.block(1, 0, d1, 1), JZX = J.block(1 + d1, 0, nz, 1);
  Eigen::MatrixXd JYY = J.block(1, 1, d1, d1), JYZ = J.block(1, 1 + d1, d1, nz);
  Eigen::MatrixXd JZY = J.block(1 + d1, 1, nz, d1), JZZ = J.block(1 + d1, 1 + d1, nz, nz);
  double nu = JXX;
  Eigen::VectorXd dY = Eigen::VectorXd::Zero(d1), dZ = Eigen::VectorXd::Zero(nz);
  for (int it = 0; it < 200; ++it) {
    dY = (Eigen::MatrixXd::Identity(d1, d1) - nu * JYY).partialPivLu().solve(JYX + JYZ * dZ);
    if (nz) dZ = (nu * Eigen::MatrixXd::Identity(nz, nz) - JZZ).partialPivLu().solve(JZX + nu * JZY * dY);
    double nn = JXX + nu * (JXY * dY)(0) + (nz ? (JXZ * dZ)(0) : 0.0);
    if (std::fabs(nn - nu) <= 1e-15 * std::fabs(nn)) {
      nu = nn;
      break;
    }
    nu = nn;
  }
  return nu;
}

inline FixedPoint fixed_point(const CycleParams& p, int k, int m, double tol = 1e-14) {
  CrossMap T(p, k, m);
  FixedPoint fp;
  fp.A_km = T.coeffs().A_km;
  if (std::fabs(1.0 - fp.A_km) < 1e-8) throw PreconditionError("fixed_point: near-parabolic case |1 - A_km| < 1e-8");
  const int D1 = p.d1, V = p.nv();
  Eigen::VectorXd Y = Eigen::VectorXd::Zero(D1), Zb = Eigen::VectorXd::Zero(V);
  // residual Xbar(X) - X with (Y, Zb) relaxed to their fixed values for that X
  auto settle = [&](double X) {
    Eigen::VectorXd in(p.d), o;
    for (int it = 0; it < 1000; ++it) {
      in << X, Y, Zb;
      o = T.eval_unchecked(in).v;
      double ch = std::max((o.segment(1, D1) - Y).lpNorm<Eigen::Infinity>(), (o.tail(V) - Zb).lpNorm<Eigen::Infinity>());
      Y = o.segment(1, D1);
      Zb = o.tail(V);
      if (ch <= 1e-17 + 1e-15 * std::max(Y.lpNorm<Eigen::Infinity>(), Zb.lpNorm<Eigen::Infinity>())) break;
    }
    return o(0) - X;
  };
  double x0 = T.coeffs().B_km / (1.0 - fp.A_km);
  double x1 = x0 + 1e-3 * p.delta;
  double r0 = settle(x0), r1 = settle(x1);
  for (int it = 0; it < 100 && r1 != r0; ++it) {
    double x2 = x1 - r1 * (x1 - x0) / (r1 - r0);
    x0 = x1;
    r0 = r1;
    x1 = x2;
    r1 = settle(x1);
    if (std::fabs(x1 - x0) <= tol * (1.0 + std::fabs(x1))) break;
  }
  fp.point.resize(p.d);
  fp.point << x1, Y, Zb;
  if (!in_box(fp.point, p.delta)) throw PreconditionError("fixed_point: fixed point lies outside the box");
  fp.multiplier = central_multiplier(T.jacobian(fp.point), D1);
  const double h = 1e-6 * p.delta;
  auto C = compose_T_km(p, k, m);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(p.d);
  e(0) = h;
  fp.multiplier_fd = (C(fp.point + e)(0) - C(fp.point - e)(0)) / (2 * h);
  return fp;
}

// X-component residual of the cross form against its affine skeleton at one box point.
inline double skeleton_residual(const CrossMap& T, const Eigen::VectorXd& in) {
  return T(in)(0) - T.coeffs().R(in(0));
}

}  // namespace blab
