#pragma once

#include "blab/return_map.hpp"

#include <boost/random/sobol.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

namespace blab {

enum class ConeKind { cu, uu, cs, ss };

inline const char* cone_name(ConeKind k) {
  switch (k) {
    case ConeKind::cu: return "cu";
    case ConeKind::uu: return "uu";
    case ConeKind::cs: return "cs";
    case ConeKind::ss: return "ss";
  }
  return "?";
}

enum class Direction { forward, backward };

// Blocks: X = [0, nx), Y = [nx, nx+ny), Z = the rest. The focus cases carry X2 inside Z.
struct ConeSpec {
  int nx = 1, ny = 1, nz = 1;
  double K = 0.1;
  ConeKind kind = ConeKind::ss;

  static ConeSpec for_params(const CycleParams& p, ConeKind kind, double K = 0.1) {
    if (!(K > 0.0 && K < 1.0)) throw PreconditionError("ConeSpec: opening K must lie in (0,1)");
    ConeSpec c;
    c.nx = 1;
    c.ny = p.d1;
    c.nz = p.nv();
    c.K = K;
    c.kind = kind;
    return c;
  }
  int dim() const { return nx + ny + nz; }

  // Cone ratio: the vector is inside the cone iff ratio <= K.
  double ratio(const Eigen::VectorXd& v) const {
    const double x = v.head(nx).norm(), y = v.segment(nx, ny).norm(), z = v.tail(nz).norm();
    auto div = [](double a, double b) { return b > 0 ? a / b : (a > 0 ? std::numeric_limits<double>::infinity() : 0.0); };
    switch (kind) {
      case ConeKind::ss: return div(std::max(x, y), z);
      case ConeKind::cs: return div(y, x + z);
      case ConeKind::uu: return div(std::max(x, z), y);
      case ConeKind::cu: return div(z, x + y);
    }
    return 0;
  }
  double margin(const Eigen::VectorXd& v) const { return 1.0 - ratio(v) / K; }

  // Norm of the block that dominates vectors of this cone.
  double dominant(const Eigen::VectorXd& v) const {
    switch (kind) {
      case ConeKind::ss: return v.tail(nz).norm();
      case ConeKind::uu: return v.segment(nx, ny).norm();
      default: return v.head(nx).norm();
    }
  }
};

using MapFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// Central-difference Jacobian. With a finite domain half-width the stencil must stay inside.
inline Eigen::MatrixXd jacobian(const MapFn& f, const Eigen::VectorXd& x, double step,
                                double domain = std::numeric_limits<double>::infinity()) {
  if (!(step > 0)) throw PreconditionError("jacobian: step must be positive");
  if (x.lpNorm<Eigen::Infinity>() + step > domain) throw PreconditionError("jacobian: point closer than one step to the domain boundary");
  const Eigen::Index n = x.size();
  Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd J(f0.size(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::VectorXd xp = x, xm = x;
    xp(j) += step;
    xm(j) -= step;
    J.col(j) = (f(xp) - f(xm)) / (2 * step);
  }
  return J;
}

// Forward-mode Jacobian of any map written over Vec<Dual>.
template <class F>
Eigen::MatrixXd ad_jacobian(F&& f, const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  Vec<Dual> a(n);
  for (Eigen::Index i = 0; i < n; ++i) a(i) = Dual(x(i), static_cast<int>(n), static_cast<int>(i));
  Vec<Dual> out = f(a);
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(out.size(), n);
  for (Eigen::Index i = 0; i < out.size(); ++i)
    if (out(i).g.size()) J.row(i) = out(i).g.transpose();
  return J;
}

// Tangent map of T from the cross-form Jacobian by block elimination.
struct TangentMap {
  Eigen::MatrixXd J;
  int d1;

  Eigen::VectorXd forward(const Eigen::VectorXd& v) const {
    const int n = static_cast<int>(J.rows()), nz = n - 1 - d1;
    Eigen::MatrixXd JY = J.block(1, 1, d1, d1);
    Eigen::VectorXd rhs = v.segment(1, d1) - J.block(1, 0, d1, 1) * v(0) - J.block(1, 1 + d1, d1, nz) * v.tail(nz);
    Eigen::VectorXd dYbar = JY.partialPivLu().solve(rhs);
    Eigen::VectorXd in(n);
    in << v(0), dYbar, v.tail(nz);
    Eigen::VectorXd o = J * in;
    Eigen::VectorXd out(n);
    out << o(0), dYbar, o.tail(nz);
    return out;
  }

  Eigen::VectorXd backward(const Eigen::VectorXd& w) const {
    const int n = static_cast<int>(J.rows()), nz = n - 1 - d1;
    // rows X and Z: unknowns (dX, dZ), dYbar given
    Eigen::MatrixXd S(1 + nz, 1 + nz);
    S << J.block(0, 0, 1, 1), J.block(0, 1 + d1, 1, nz), J.block(1 + d1, 0, nz, 1), J.block(1 + d1, 1 + d1, nz, nz);
    Eigen::VectorXd dYbar = w.segment(1, d1);
    Eigen::VectorXd r(1 + nz);
    r(0) = w(0) - (J.block(0, 1, 1, d1) * dYbar)(0);
    r.tail(nz) = w.tail(nz) - J.block(1 + d1, 1, nz, d1) * dYbar;
    Eigen::VectorXd xz = S.partialPivLu().solve(r);
    Eigen::VectorXd in(n);
    in << xz(0), dYbar, xz.tail(nz);
    Eigen::VectorXd o = J * in;
    Eigen::VectorXd out(n);
    out << xz(0), o.segment(1, d1), xz.tail(nz);
    return out;
  }
};

struct ConeReport {
  double pass_fraction = 0;
  double worst_margin = std::numeric_limits<double>::infinity();
  double growth_min = std::numeric_limits<double>::infinity();
  double growth_max = 0;
  long samples = 0;
  double forward_factor = 0;  // contraction (<1) or expansion (>1) of the dominant block under T
};

namespace detail {

struct SobolStream {
  boost::random::sobol gen;
  explicit SobolStream(unsigned dim, unsigned long long skip) : gen(dim) { gen.discard(skip * dim); }
  double next() { return static_cast<double>(gen()) / 18446744073709551616.0; }
};

// A vector inside the cone (ratio <= K * t) built from quasi-random numbers in [0,1).
inline Eigen::VectorXd cone_vector(const ConeSpec& c, detail::SobolStream& s) {
  const int n = c.dim();
  Eigen::VectorXd raw(n);
  for (int i = 0; i < n; ++i) raw(i) = 2.0 * s.next() - 1.0;
  const double t = s.next();
  Eigen::VectorXd v = raw;
  auto fix = [](Eigen::VectorXd& seg) {
    if (seg.norm() == 0) seg(0) = 1.0;
  };
  Eigen::VectorXd X = v.head(c.nx), Y = v.segment(c.nx, c.ny), Z = v.tail(c.nz);
  switch (c.kind) {
    case ConeKind::ss: {
      fix(Z);
      Z.normalize();
      double s1 = std::max(X.norm(), Y.norm());
      if (s1 > 0) {
        X *= c.K * t / s1;
        Y *= c.K * t / s1;
      }
      break;
    }
    case ConeKind::uu: {
      fix(Y);
      Y.normalize();
      double s1 = std::max(X.norm(), Z.norm());
      if (s1 > 0) {
        X *= c.K * t / s1;
        Z *= c.K * t / s1;
      }
      break;
    }
    case ConeKind::cs: {
      if (X.norm() + Z.norm() == 0) X(0) = 1.0;
      double base = X.norm() + Z.norm();
      X /= base;
      Z /= base;
      if (Y.norm() > 0) Y *= c.K * t / Y.norm();
      break;
    }
    case ConeKind::cu: {
      if (X.norm() + Y.norm() == 0) X(0) = 1.0;
      double base = X.norm() + Y.norm();
      X /= base;
      Y /= base;
      if (Z.norm() > 0) Z *= c.K * t / Z.norm();
      break;
    }
  }
  v << X, Y, Z;
  return v;
}

}  // namespace detail

// Samples (point, tangent vector) pairs over the box with a Sobol sequence. The point is the
// cross-form input; it is used only when its image lies in the box as well.
inline ConeReport check_cone_invariance(const CrossMap& T, const ConeSpec& cone_in, const ConeSpec& cone_out,
                                        Direction dir, long samples, unsigned long long seed = 0) {
  const CycleParams& p = T.params();
  const int n = p.d;
  if (cone_in.dim() != n || cone_out.dim() != n) throw PreconditionError("check_cone_invariance: cone blocks do not match the map");
  if (samples < 1) throw PreconditionError("check_cone_invariance: sample count must be >= 1");
  detail::SobolStream pts(static_cast<unsigned>(n), seed + 1);
  detail::SobolStream vecs(static_cast<unsigned>(n + 1), seed + 1);
  ConeReport rep;
  long inside = 0, tried = 0;
  while (rep.samples < samples && tried < 20 * samples) {
    ++tried;
    Eigen::VectorXd in(n);
    for (int i = 0; i < n; ++i) in(i) = p.delta * (2.0 * pts.next() - 1.0);
    Eigen::VectorXd v = detail::cone_vector(cone_in, vecs);
    Eigen::MatrixXd J;
    try {
      if (!T.eval_unchecked(in).in_box) continue;
      J = T.jacobian_unchecked(in);
    } catch (const ChartError&) {
      continue;  // orbit leaves the chart: the point is outside the domain of T
    }
    TangentMap D{J, p.d1};
    Eigen::VectorXd w = dir == Direction::forward ? D.forward(v) : D.backward(v);
    const double mg = cone_out.margin(w);
    ++rep.samples;
    if (mg >= 0) ++inside;
    rep.worst_margin = std::min(rep.worst_margin, mg);
    const double din = cone_in.dominant(v);
    if (din > 1e-3) {
      const double g = cone_out.dominant(w) / din;
      rep.growth_min = std::min(rep.growth_min, g);
      rep.growth_max = std::max(rep.growth_max, g);
    }
  }
  if (rep.samples == 0) throw PreconditionError("check_cone_invariance: no sampled point returns to the box");
  rep.pass_fraction = static_cast<double>(inside) / static_cast<double>(rep.samples);
  rep.forward_factor = dir == Direction::forward ? rep.growth_min : 1.0 / rep.growth_min;
  return rep;
}

}  // namespace blab
