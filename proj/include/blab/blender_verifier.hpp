#pragma once

#include "blab/cone_checker.hpp"
#include "blab/covering_engine.hpp"
#include "blab/return_map.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace blab {

// Failure of one refinement step. The kind says which hypothesis broke.
class BlenderStepError : public std::runtime_error {
 public:
  enum Kind { covering_margin, bracketing, range, non_nesting };
  BlenderStepError(Kind k, const std::string& what) : std::runtime_error(what), kind_(k) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline const char* step_error_name(BlenderStepError::Kind k) {
  switch (k) {
    case BlenderStepError::covering_margin: return "covering-margin";
    case BlenderStepError::bracketing: return "bracketing";
    case BlenderStepError::range: return "range";
    case BlenderStepError::non_nesting: return "non-nesting";
  }
  return "?";
}

// Disc (X, C) = s(b) over the base cube [-half, half]^nb, sampled on a tensor grid.
// cs orientation: base = Z, complement C = Y. cu orientation: base = Y, complement C = Z.
struct Disc {
  Orientation orientation = Orientation::cs;
  int nb = 1, nc = 1, grid = 17;
  double half = 0.1;
  std::vector<Eigen::VectorXd> values;  // 1 + nc per node
  std::vector<Eigen::MatrixXd> slopes;  // (1 + nc) x nb per node; empty means use difference quotients
  double lipschitz = 0;

  long nodes() const {
    long n = 1;
    for (int i = 0; i < nb; ++i) n *= grid;
    return n;
  }
  double spacing() const { return 2.0 * half / (grid - 1); }
  Eigen::VectorXd node(long idx) const {
    Eigen::VectorXd b(nb);
    for (int i = 0; i < nb; ++i) {
      b(i) = -half + spacing() * static_cast<double>(idx % grid);
      idx /= grid;
    }
    return b;
  }
  long center_index() const {
    long idx = 0, mul = 1;
    for (int i = 0; i < nb; ++i) {
      idx += mul * (grid / 2);
      mul *= grid;
    }
    return idx;
  }
  bool contains_base(const Eigen::VectorXd& b, double slack = 0) const {
    return b.lpNorm<Eigen::Infinity>() <= half * (1 + slack);
  }

  // Multilinear interpolation of values (and of slopes when present).
  template <class Get>
  Eigen::MatrixXd interp(const Eigen::VectorXd& b, Get get) const {
    std::vector<long> cell(nb);
    std::vector<double> t(nb);
    const double h = spacing();
    for (int i = 0; i < nb; ++i) {
      double u = (std::clamp(b(i), -half, half) + half) / h;
      long c = std::min<long>(static_cast<long>(std::floor(u)), grid - 2);
      cell[i] = c;
      t[i] = u - static_cast<double>(c);
    }
    Eigen::MatrixXd acc;
    for (long corner = 0; corner < (1L << nb); ++corner) {
      double w = 1.0;
      long idx = 0, mul = 1;
      for (int i = 0; i < nb; ++i) {
        const bool up = (corner >> i) & 1;
        w *= up ? t[i] : 1.0 - t[i];
        idx += mul * (cell[i] + (up ? 1 : 0));
        mul *= grid;
      }
      if (w == 0.0) continue;
      Eigen::MatrixXd v = get(idx);
      if (acc.size() == 0) acc = Eigen::MatrixXd::Zero(v.rows(), v.cols());
      acc += w * v;
    }
    return acc;
  }

  Eigen::VectorXd eval(const Eigen::VectorXd& b) const {
    return interp(b, [&](long i) { return Eigen::MatrixXd(values[static_cast<std::size_t>(i)]); });
  }

  Eigen::MatrixXd slope_at(const Eigen::VectorXd& b) const {
    if (!slopes.empty()) return interp(b, [&](long i) { return slopes[static_cast<std::size_t>(i)]; });
    // gradient of the multilinear interpolant, one-sided inside the cell
    Eigen::MatrixXd G(1 + nc, nb);
    const double h = spacing();
    for (int i = 0; i < nb; ++i) {
      Eigen::VectorXd lo = b, hi = b;
      double c = std::clamp(b(i), -half, half);
      long cell = std::min<long>(static_cast<long>(std::floor((c + half) / h)), grid - 2);
      lo(i) = -half + h * static_cast<double>(cell);
      hi(i) = lo(i) + h;
      G.col(i) = (eval(hi) - eval(lo)) / h;
    }
    return G;
  }

  static Disc affine(const CycleParams& p, Orientation o, const Eigen::VectorXd& c, const Eigen::MatrixXd& G,
                     int grid = 17) {
    Disc d = blank(p, o, grid);
    if (c.size() != 1 + d.nc || G.rows() != 1 + d.nc || G.cols() != d.nb)
      throw PreconditionError("Disc::affine: shapes do not match the orientation");
    d.values.resize(static_cast<std::size_t>(d.nodes()));
    d.slopes.assign(static_cast<std::size_t>(d.nodes()), G);
    for (long i = 0; i < d.nodes(); ++i) d.values[static_cast<std::size_t>(i)] = c + G * d.node(i);
    d.lipschitz = G.operatorNorm();
    return d;
  }

  static Disc from_function(const CycleParams& p, Orientation o,
                            const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f, int grid = 17) {
    Disc d = blank(p, o, grid);
    d.values.resize(static_cast<std::size_t>(d.nodes()));
    for (long i = 0; i < d.nodes(); ++i) d.values[static_cast<std::size_t>(i)] = f(d.node(i));
    d.lipschitz = 0;
    for (long i = 0; i < d.nodes(); ++i) d.lipschitz = std::max(d.lipschitz, d.slope_at(d.node(i)).operatorNorm());
    return d;
  }

  static Disc blank(const CycleParams& p, Orientation o, int grid) {
    if (p.kind != Case::Saddle) throw PreconditionError("Disc: blender discs are defined for the saddle case");
    if (grid < 2) throw PreconditionError("Disc: grid needs at least 2 points per axis");
    Disc d;
    d.orientation = o;
    d.nb = o == Orientation::cs ? p.nv() : p.d1;
    d.nc = o == Orientation::cs ? p.d1 : p.nv();
    d.grid = grid;
    d.half = p.delta;
    if (std::pow(static_cast<double>(grid), d.nb) > 2e5) throw PreconditionError("Disc: grid too large for the base dimension");
    return d;
  }
};

// Pi' for the given orientation and the proper-crossing budgets.
struct CrossingCube {
  double x_half = 0;     // delta'
  double rest_half = 0;  // delta
  double slope_budget = 0;  // q|alpha|/4
  double tv_budget = 0;     // delta'|alpha|/4, total change of the central coordinate
};

inline CrossingCube crossing_cube(const CycleParams& p, double alpha_eff) {
  return {p.delta_prime(), p.delta, p.q * std::fabs(alpha_eff) / 4.0, p.delta_prime() * std::fabs(alpha_eff) / 4.0};
}

struct ProperReport {
  bool proper = false;
  double margin = 0;      // slope budget minus the largest slope
  double tv = 0;          // max - min of the central coordinate
  double tv_margin = 0;
  double max_slope = 0;
  std::string reason;
};

// The cone is given as a ConeSpec whose K is the slope budget (ss for cs discs, uu for cu discs).
inline ProperReport is_proper_crossing(const Disc& disc, const CrossingCube& cube, const ConeSpec& cone) {
  ProperReport r;
  const double K = cone.K;
  if (static_cast<long>(disc.values.size()) != disc.nodes()) {
    r.reason = "graph not defined on the full base";
    return r;
  }
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, rest = 0;
  for (const auto& v : disc.values) {
    if (!v.allFinite()) {
      r.reason = "graph not finite";
      return r;
    }
    xmin = std::min(xmin, v(0));
    xmax = std::max(xmax, v(0));
    if (disc.nc > 0) rest = std::max(rest, v.tail(disc.nc).lpNorm<Eigen::Infinity>());
  }
  for (long i = 0; i < disc.nodes(); ++i) {
    Eigen::MatrixXd G = disc.slope_at(disc.node(i));
    double sx = G.row(0).norm();
    double sc = disc.nc > 0 ? G.bottomRows(disc.nc).operatorNorm() : 0.0;
    r.max_slope = std::max({r.max_slope, sx, sc});
  }
  // sampled difference quotients between neighbouring nodes
  for (long i = 0; i < disc.nodes(); ++i) {
    long idx = i, mul = 1;
    for (int a = 0; a < disc.nb; ++a) {
      if ((idx / mul) % disc.grid + 1 < disc.grid) {
        const auto& v0 = disc.values[static_cast<std::size_t>(i)];
        const auto& v1 = disc.values[static_cast<std::size_t>(i + mul)];
        const double h = disc.spacing();
        double q = std::max(std::fabs(v1(0) - v0(0)), disc.nc ? (v1.tail(disc.nc) - v0.tail(disc.nc)).norm() : 0.0) / h;
        r.max_slope = std::max(r.max_slope, q);
      }
      mul *= disc.grid;
    }
  }
  r.tv = xmax - xmin;
  r.margin = K - r.max_slope;
  r.tv_margin = cube.tv_budget - r.tv;
  if (xmin < -cube.x_half || xmax > cube.x_half) r.reason = "central coordinate leaves [-delta', delta']";
  else if (rest > cube.rest_half) r.reason = "complementary coordinates leave the cube";
  else if (!(r.max_slope < K)) r.reason = "slope outside the cone";
  else if (!(r.tv < cube.tv_budget)) r.reason = "total change of the central coordinate exceeds the budget";
  r.proper = r.reason.empty();
  return r;
}

// Cross maps of every covering pair built once for a given system.
struct BlenderContext {
  CycleParams params;
  CoveringSet covering;
  std::vector<CrossMap> maps;

  BlenderContext(const CycleParams& p, const CoveringSet& cs) : params(p), covering(cs) {
    maps.reserve(cs.size());
    for (const KmPair& q : cs.pairs) maps.emplace_back(p, static_cast<int>(q.k), static_cast<int>(q.m));
  }
  CrossingCube cube() const { return crossing_cube(params, covering.alpha_eff); }
  ConeSpec cone() const {
    ConeSpec c = ConeSpec::for_params(params, covering.orientation == Orientation::cs ? ConeKind::ss : ConeKind::uu, 0.5);
    c.K = cube().slope_budget;
    return c;
  }
};

// Solution of the preimage equations over one base point.
struct NodeSolve {
  double X = 0;
  Eigen::VectorXd in, out;   // cross input / output at the solution
  Eigen::VectorXd parent;    // base point of the same orbit point on the previous disc
  Eigen::VectorXd value;     // new disc value (1 + nc)
  Eigen::MatrixXd slope;     // d value / d base
  Eigen::MatrixXd dparent;   // d parent / d base
  double residual = 0;
};

namespace detail {

struct Blocks {
  std::vector<int> base, comp, ucols;
};

inline Blocks blocks_for(const CycleParams& p, Orientation o) {
  std::vector<int> Y, Z;
  for (int i = 0; i < p.d1; ++i) Y.push_back(1 + i);
  for (int i = 0; i < p.nv(); ++i) Z.push_back(1 + p.d1 + i);
  Blocks b;
  b.base = o == Orientation::cs ? Z : Y;
  b.comp = o == Orientation::cs ? Y : Z;
  b.ucols.push_back(0);
  b.ucols.insert(b.ucols.end(), b.comp.begin(), b.comp.end());
  return b;
}

inline Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<int>& idx) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) r(static_cast<Eigen::Index>(i)) = v(idx[i]);
  return r;
}
inline void scatter(Eigen::VectorXd& v, const std::vector<int>& idx, const Eigen::VectorXd& src) {
  for (std::size_t i = 0; i < idx.size(); ++i) v(idx[i]) = src(static_cast<Eigen::Index>(i));
}

}  // namespace detail

// Solves the preimage equations at base point b for disc S and map T:
//   cs: Xbar(X, Ybar, Z) = s_X(Zbar), Ybar = s_Y(Zbar);  cu: X = s_X(Y), Z = s_Z(Y).
// X is found by bracketed root finding on [-delta', delta'] to 1e-14; the complement by fixed-point iteration.
inline NodeSolve solve_node(const Disc& S, const CrossMap& T, const Eigen::VectorXd& b, const Eigen::VectorXd& comp_guess) {
  const CycleParams& p = T.params();
  const Orientation o = S.orientation;
  const detail::Blocks B = detail::blocks_for(p, o);
  const double dp = p.delta_prime();
  Eigen::VectorXd in = Eigen::VectorXd::Zero(p.d), out;
  detail::scatter(in, B.base, b);
  Eigen::VectorXd comp = comp_guess;

  auto settle = [&](double X) {
    in(0) = X;
    for (int it = 0; it < 60; ++it) {
      detail::scatter(in, B.comp, comp);
      out = T.eval_unchecked(in).v;
      Eigen::VectorXd parent = detail::gather(out, B.base);
      Eigen::VectorXd nc = S.eval(parent).tail(S.nc);
      const double ch = (nc - comp).lpNorm<Eigen::Infinity>();
      comp = nc;
      if (ch <= 1e-16 * (1.0 + comp.lpNorm<Eigen::Infinity>())) break;
    }
    detail::scatter(in, B.comp, comp);
    out = T.eval_unchecked(in).v;
    const double sx = S.eval(detail::gather(out, B.base))(0);
    return o == Orientation::cs ? out(0) - sx : X - sx;
  };

  double lo = -dp, hi = dp;
  double flo = settle(lo), fhi = settle(hi);
  if (!(flo * fhi < 0)) {
    std::ostringstream os;
    os << "no sign change of the central equation over [-delta', delta'] at base point " << b.transpose()
       << " for (k,m) = (" << T.k() << "," << T.m() << "): f(-delta') = " << flo << ", f(delta') = " << fhi;
    throw BlenderStepError(BlenderStepError::bracketing, os.str());
  }
  // Illinois regula falsi: the bracket is kept, the stale end's value is halved when the same
  // side moves twice; a step that falls outside the bracket is replaced by the midpoint.
  int side = 0;
  for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
    double mid = (lo * fhi - hi * flo) / (fhi - flo);
    if (!(mid > lo && mid < hi)) mid = 0.5 * (lo + hi);
    const double fm = settle(mid);
    if (fm == 0) {
      lo = hi = mid;
      break;
    }
    if ((fm < 0) == (flo < 0)) {
      lo = mid;
      flo = fm;
      if (side == -1) fhi *= 0.5;
      side = -1;
    } else {
      hi = mid;
      fhi = fm;
      if (side == 1) flo *= 0.5;
      side = 1;
    }
  }
  NodeSolve ns;
  ns.X = 0.5 * (lo + hi);
  ns.residual = std::fabs(settle(ns.X));
  ns.in = in;
  ns.out = out;
  ns.parent = detail::gather(out, B.base);

  // implicit-function derivatives of the solution with respect to the base point
  const Eigen::MatrixXd J = T.jacobian_unchecked(in);
  const Eigen::MatrixXd G = S.slope_at(ns.parent);
  const int nu = 1 + S.nc, nb = S.nb;
  Eigen::MatrixXd JPu = J(B.base, B.ucols), JPb = J(B.base, B.base);
  Eigen::MatrixXd Fu(nu, nu), Fb(nu, nb);
  Eigen::RowVectorXd rowXu = Eigen::RowVectorXd::Zero(nu), rowXb = Eigen::RowVectorXd::Zero(nb);
  if (o == Orientation::cs) {
    for (int j = 0; j < nu; ++j) rowXu(j) = J(0, B.ucols[static_cast<std::size_t>(j)]);
    for (int j = 0; j < nb; ++j) rowXb(j) = J(0, B.base[static_cast<std::size_t>(j)]);
  } else {
    rowXu(0) = 1.0;
  }
  Fu.row(0) = rowXu - G.row(0) * JPu;
  Fb.row(0) = rowXb - G.row(0) * JPb;
  if (S.nc > 0) {
    Eigen::MatrixXd Ic = Eigen::MatrixXd::Zero(S.nc, nu);
    Ic.rightCols(S.nc).setIdentity();
    Fu.bottomRows(S.nc) = Ic - G.bottomRows(S.nc) * JPu;
    Fb.bottomRows(S.nc) = -G.bottomRows(S.nc) * JPb;
  }
  const Eigen::MatrixXd dudb = -Fu.fullPivLu().solve(Fb);
  ns.dparent = JPu * dudb + JPb;
  ns.value.resize(nu);
  ns.slope.resize(nu, nb);
  if (o == Orientation::cs) {
    ns.value(0) = ns.X;
    ns.slope.row(0) = dudb.row(0);
  } else {
    ns.value(0) = out(0);
    std::vector<int> r0{0};
    ns.slope.row(0) = J(r0, B.ucols) * dudb + J(r0, B.base);
  }
  if (S.nc > 0) {
    ns.value.tail(S.nc) = detail::gather(out, B.comp);
    ns.slope.bottomRows(S.nc) = J(B.comp, B.ucols) * dudb + J(B.comp, B.base);
  }
  return ns;
}

struct PreimageResult {
  std::size_t index = 0;  // position in the covering set
  KmPair pair;
  Disc disc;
  double margin = 0;          // containment margin of the central range inside int(E_j)
  double base_lipschitz = 0;  // largest |d parent / d base| over the nodes
  double max_residual = 0;
  std::vector<NodeSolve> nodes;
};

// Covering interval holding the disc's central range with the largest margin (ties: smaller k, then m).
inline std::size_t select_pair(const Disc& S, const CoveringSet& cs, double& margin_out) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  for (const auto& v : S.values) {
    xmin = std::min(xmin, v(0));
    xmax = std::max(xmax, v(0));
  }
  const double need = cs.delta_prime * std::fabs(cs.alpha_eff) / 8.0;
  std::size_t best = cs.size();
  double best_margin = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < cs.size(); ++j) {
    const double m = std::min(xmin - cs.lo[j].convert_to<double>(), cs.hi[j].convert_to<double>() - xmax);
    const bool better = m > best_margin ||
                        (m == best_margin && best < cs.size() &&
                         (cs.pairs[j].k < cs.pairs[best].k || (cs.pairs[j].k == cs.pairs[best].k && cs.pairs[j].m < cs.pairs[best].m)));
    if (better) {
      best_margin = m;
      best = j;
    }
  }
  margin_out = best_margin;
  if (best == cs.size() || best_margin < need) {
    std::ostringstream os;
    os << "central range [" << xmin << ", " << xmax << "] is not inside any covering interval with margin "
       << need << " (best margin " << best_margin << ")";
    throw BlenderStepError(BlenderStepError::covering_margin, os.str());
  }
  return best;
}

inline PreimageResult preimage_step(const Disc& S, const BlenderContext& ctx, std::size_t forced = SIZE_MAX) {
  PreimageResult r;
  if (forced == SIZE_MAX) {
    r.index = select_pair(S, ctx.covering, r.margin);
  } else {
    if (forced >= ctx.covering.size()) throw PreconditionError("preimage_step: pair index out of range");
    r.index = forced;
    r.margin = std::nan("");
  }
  r.pair = ctx.covering.pairs[r.index];
  const CrossMap& T = ctx.maps[r.index];
  r.disc = S;
  r.disc.slopes.assign(static_cast<std::size_t>(S.nodes()), Eigen::MatrixXd());
  Eigen::VectorXd guess = S.eval(Eigen::VectorXd::Zero(S.nb)).tail(S.nc);
  const CrossingCube cube = ctx.cube();
  const std::vector<int> comp_cols = detail::blocks_for(T.params(), S.orientation).comp;
  r.disc.lipschitz = 0;
  for (long i = 0; i < S.nodes(); ++i) {
    NodeSolve ns = solve_node(S, T, S.node(i), guess);
    guess = detail::gather(ns.in, comp_cols);
    if (!S.contains_base(ns.parent, 1e-12)) {
      std::ostringstream os;
      os << "image base point " << ns.parent.transpose() << " leaves the base cube of the previous disc";
      throw BlenderStepError(BlenderStepError::non_nesting, os.str());
    }
    if (std::fabs(ns.value(0)) > cube.x_half || (S.nc > 0 && ns.value.tail(S.nc).lpNorm<Eigen::Infinity>() > cube.rest_half)) {
      std::ostringstream os;
      os << "preimage disc leaves Pi' at base point " << S.node(i).transpose();
      throw BlenderStepError(BlenderStepError::range, os.str());
    }
    r.disc.values[static_cast<std::size_t>(i)] = ns.value;
    r.disc.slopes[static_cast<std::size_t>(i)] = ns.slope;
    r.disc.lipschitz = std::max(r.disc.lipschitz, ns.slope.operatorNorm());
    r.base_lipschitz = std::max(r.base_lipschitz, ns.dparent.operatorNorm());
    r.max_residual = std::max(r.max_residual, ns.residual);
    r.nodes.push_back(std::move(ns));
  }
  return r;
}

inline PreimageResult preimage_step(const Disc& S, const CoveringSet& cs, const CycleParams& p) {
  return preimage_step(S, BlenderContext(p, cs));
}

struct MembershipReport {
  bool member = false;
  int depth_verified = 0;  // steps whose points were found inside Pi
  int failed_step = 0;     // 0 when member
  double mismatch = 0;     // recovered vs given coordinate of the slow block at step 0
  std::string failure;
};

// Orbit of `point` through the pair sequence, solved as a two-point boundary value problem.
// cs: backward orbit, M_{i-1} = T_i(M_i). X is propagated from the point, Z from a free far end;
// the recovered Z_0 must match the point. cu: forward orbit, the roles of Y and Z swap.
inline MembershipReport orbit_membership(const Eigen::VectorXd& point, const std::vector<KmPair>& seq,
                                         const CycleParams& p, int depth, Orientation o = Orientation::cs,
                                         double match_tol = 1e-9) {
  if (depth < 0 || depth > static_cast<int>(seq.size()))
    throw PreconditionError("orbit_membership: depth exceeds the pair sequence");
  if (point.size() != p.d) throw PreconditionError("orbit_membership: point dimension mismatch");
  std::vector<CrossMap> maps;
  maps.reserve(static_cast<std::size_t>(depth));
  for (int i = 0; i < depth; ++i) maps.emplace_back(p, static_cast<int>(seq[static_cast<std::size_t>(i)].k), static_cast<int>(seq[static_cast<std::size_t>(i)].m));
  const int d1 = p.d1, nv = p.nv();
  const double dl = p.delta;
  std::vector<double> X(static_cast<std::size_t>(depth + 1));
  std::vector<Eigen::VectorXd> Y(static_cast<std::size_t>(depth + 1)), Z(static_cast<std::size_t>(depth + 1));
  X[0] = point(0);
  Y[0] = point.segment(1, d1);
  Z[0] = point.tail(nv);
  for (int i = 1; i <= depth; ++i) {
    Y[static_cast<std::size_t>(i)] = Eigen::VectorXd::Zero(d1);
    Z[static_cast<std::size_t>(i)] = Eigen::VectorXd::Zero(nv);
  }
  MembershipReport rep;
  auto cross = [&](int i, double x, const Eigen::VectorXd& ybar, const Eigen::VectorXd& z) {
    Eigen::VectorXd in(p.d);
    in << x, ybar, z;
    return maps[static_cast<std::size_t>(i - 1)].eval_unchecked(in).v;
  };
  auto fail = [&](int step, const std::string& why) {
    rep.member = false;
    rep.failed_step = step;
    rep.depth_verified = step - 1;
    rep.failure = why;
    return rep;
  };
  if (depth == 0) {
    rep.member = in_box(point, dl);
    if (!rep.member) rep.failure = "point outside Pi";
    return rep;
  }
  Eigen::VectorXd slow0 = o == Orientation::cs ? Z[0] : Y[0];
  Eigen::VectorXd recovered;
  for (int sweep = 0; sweep < 30; ++sweep) {
    double change = 0;
    if (o == Orientation::cs) {
      // X and Y outward: solve Xbar(X_i, Y_{i-1}, Z_i) = X_{i-1}
      for (int i = 1; i <= depth; ++i) {
        const auto& Yp = Y[static_cast<std::size_t>(i - 1)];
        const auto& Zi = Z[static_cast<std::size_t>(i)];
        auto f = [&](double x) { return cross(i, x, Yp, Zi)(0) - X[static_cast<std::size_t>(i - 1)]; };
        double lo = -dl, hi = dl, flo = f(lo), fhi = f(hi);
        if (!(flo * fhi <= 0)) return fail(i, "no preimage with X in [-delta, delta]");
        while (hi - lo > 1e-16 * (1 + std::fabs(lo))) {
          const double mid = 0.5 * (lo + hi), fm = f(mid);
          if (mid == lo || mid == hi) break;
          if ((fm < 0) == (flo < 0)) {
            lo = mid;
            flo = fm;
          } else {
            hi = mid;
          }
        }
        const double xi = 0.5 * (lo + hi);
        change = std::max(change, std::fabs(xi - X[static_cast<std::size_t>(i)]));
        X[static_cast<std::size_t>(i)] = xi;
        Eigen::VectorXd out = cross(i, xi, Yp, Zi);
        Y[static_cast<std::size_t>(i)] = out.segment(1, d1);
        if (Y[static_cast<std::size_t>(i)].lpNorm<Eigen::Infinity>() > dl) return fail(i, "Y leaves [-delta, delta]");
      }
      // Z inward from the free end
      for (int i = depth; i >= 1; --i) {
        Eigen::VectorXd out = cross(i, X[static_cast<std::size_t>(i)], Y[static_cast<std::size_t>(i - 1)], Z[static_cast<std::size_t>(i)]);
        Eigen::VectorXd zp = out.tail(nv);
        if (i == 1) {
          recovered = zp;
        } else {
          change = std::max(change, (zp - Z[static_cast<std::size_t>(i - 1)]).lpNorm<Eigen::Infinity>());
          Z[static_cast<std::size_t>(i - 1)] = zp;
        }
      }
    } else {
      // forward orbit: M_i = T_i(M_{i-1}); cross(X_{i-1}, Y_i, Z_{i-1}) = (X_i, Y_{i-1}, Z_i)
      for (int i = 1; i <= depth; ++i) {
        Eigen::VectorXd out = cross(i, X[static_cast<std::size_t>(i - 1)], Y[static_cast<std::size_t>(i)], Z[static_cast<std::size_t>(i - 1)]);
        change = std::max(change, std::fabs(out(0) - X[static_cast<std::size_t>(i)]));
        X[static_cast<std::size_t>(i)] = out(0);
        Z[static_cast<std::size_t>(i)] = out.tail(nv);
        if (std::fabs(out(0)) > dl) return fail(i, "X leaves [-delta, delta]");
        if (Z[static_cast<std::size_t>(i)].lpNorm<Eigen::Infinity>() > dl) return fail(i, "Z leaves [-delta, delta]");
      }
      for (int i = depth; i >= 1; --i) {
        Eigen::VectorXd out = cross(i, X[static_cast<std::size_t>(i - 1)], Y[static_cast<std::size_t>(i)], Z[static_cast<std::size_t>(i - 1)]);
        Eigen::VectorXd yp = out.segment(1, d1);
        if (i == 1) {
          recovered = yp;
        } else {
          change = std::max(change, (yp - Y[static_cast<std::size_t>(i - 1)]).lpNorm<Eigen::Infinity>());
          Y[static_cast<std::size_t>(i - 1)] = yp;
        }
      }
    }
    if (change <= 1e-15 && sweep > 0) break;
  }
  for (int i = 0; i <= depth; ++i) {
    Eigen::VectorXd M(p.d);
    M << X[static_cast<std::size_t>(i)], Y[static_cast<std::size_t>(i)], Z[static_cast<std::size_t>(i)];
    if (!in_box(M, dl)) return fail(std::max(i, 1), "orbit point outside Pi");
  }
  rep.mismatch = (recovered - slow0).lpNorm<Eigen::Infinity>();
  if (rep.mismatch > match_tol) return fail(1, "recovered slow coordinate does not match the point");
  rep.member = true;
  rep.depth_verified = depth;
  return rep;
}

inline MembershipReport wu_membership(const Eigen::VectorXd& point, const std::vector<KmPair>& seq, const CycleParams& p,
                                      int depth) {
  return orbit_membership(point, seq, p, depth, Orientation::cs);
}

struct TrialRecord {
  Eigen::VectorXd seed_center;  // disc value at the base center
  Eigen::MatrixXd seed_slope;
  std::vector<KmPair> pairs;
  std::vector<double> log10_diameters;  // upper bounds on diam of the nested images, step 0 first
  Eigen::VectorXd witness;              // box coordinates on the initial disc
  double witness_offset = 0;            // distance of the witness from the initial graph
  double max_residual = 0;
  MembershipReport membership;
  bool pass = false;
  std::string failure;
};

struct BlenderCertificate {
  Orientation orientation = Orientation::cs;
  CoveringSet covering;
  double slope_budget = 0, tv_budget = 0;
  int trials = 0, depth = 0;
  double tol = 0;
  std::uint64_t seed = 0;
  std::vector<TrialRecord> records;
  int passed = 0;
  bool pass = false;
  std::string note;
};

namespace detail {

// Uniform doubles from the raw 64-bit Mersenne Twister stream, identical on every platform.
struct Rng {
  std::mt19937_64 gen;
  explicit Rng(std::uint64_t s) : gen(s) {}
  double uniform(double a, double b) { return a + (b - a) * static_cast<double>(gen() >> 11) * 0x1.0p-53; }
};

}  // namespace detail

// A random disc crossing Pi' properly: affine graph with 90% of the slope and variation budgets.
inline Disc random_proper_disc(const CycleParams& p, Orientation o, double alpha_eff, detail::Rng& rng, int grid = 17) {
  const CrossingCube cube = crossing_cube(p, alpha_eff);
  Disc d = Disc::blank(p, o, grid);
  const int nb = d.nb, nc = d.nc;
  Eigen::MatrixXd G(1 + nc, nb);
  const double gx = 0.9 * cube.tv_budget / (2.0 * p.delta * nb);
  const double gs = 0.9 * cube.slope_budget / std::sqrt(static_cast<double>(std::max(1, nc * nb)));
  for (int j = 0; j < nb; ++j) {
    G(0, j) = rng.uniform(-gx, gx);
    for (int i = 0; i < nc; ++i) G(1 + i, j) = rng.uniform(-gs, gs);
  }
  const double tv = 2.0 * p.delta * G.row(0).lpNorm<1>();
  Eigen::VectorXd c(1 + nc);
  c(0) = rng.uniform(-cube.x_half + tv, cube.x_half - tv);
  for (int i = 0; i < nc; ++i) c(1 + i) = rng.uniform(-0.5 * p.delta, 0.5 * p.delta);
  return Disc::affine(p, o, c, G, grid);
}

// Runs `trials` refinement chains of length `depth` on random proper discs. Every chain must keep
// its discs proper, shrink the nested images below tol and produce a witness whose orbit stays in
// Pi for all depth steps.
inline BlenderCertificate verify_blender(const CycleParams& p, const CoveringSet& covering, Orientation o, int trials,
                                         int depth, double tol, std::uint64_t seed = 0, int grid = 17) {
  if (trials < 1 || depth < 0 || !(tol > 0)) throw PreconditionError("verify_blender: need trials >= 1, depth >= 0, tol > 0");
  if (covering.orientation != o) throw PreconditionError("verify_blender: covering built for the other orientation");
  if (o == Orientation::cs && !(std::fabs(p.alpha()) < 1)) throw PreconditionError("verify_blender: cs needs |alpha| < 1");
  if (o == Orientation::cu && !(std::fabs(p.alpha()) > 1)) throw PreconditionError("verify_blender: cu needs |alpha| > 1");
  const CoverReport cr = verify_covering(covering);
  if (!cr.ok()) throw PreconditionError("verify_blender: covering set does not verify");
  BlenderContext ctx(p, covering);
  BlenderCertificate cert;
  cert.orientation = o;
  cert.covering = covering;
  cert.slope_budget = ctx.cube().slope_budget;
  cert.tv_budget = ctx.cube().tv_budget;
  cert.trials = trials;
  cert.depth = depth;
  cert.tol = tol;
  cert.seed = seed;
  detail::Rng rng(seed);
  const ConeSpec cone = ctx.cone();
  const detail::Blocks Bk = detail::blocks_for(p, o);
  for (int t = 0; t < trials; ++t) {
    TrialRecord rec;
    Disc S0 = random_proper_disc(p, o, covering.alpha_eff, rng, grid);
    rec.seed_center = S0.eval(Eigen::VectorXd::Zero(S0.nb));
    rec.seed_slope = S0.slopes.front();
    const double diam0 = (1.0 + S0.lipschitz) * 2.0 * p.delta * std::sqrt(static_cast<double>(S0.nb));
    rec.log10_diameters.push_back(std::log10(diam0));
    if (depth == 0) {
      rec.failure = "no refinement";
      cert.records.push_back(rec);
      continue;
    }
    std::vector<Disc> discs{S0};
    std::vector<std::size_t> chosen;
    try {
      ProperReport pr0 = is_proper_crossing(S0, ctx.cube(), cone);
      if (!pr0.proper) throw BlenderStepError(BlenderStepError::range, "seed disc is not proper: " + pr0.reason);
      double log_lip = 0;
      for (int i = 0; i < depth; ++i) {
        PreimageResult pr = preimage_step(discs.back(), ctx);
        ProperReport proper = is_proper_crossing(pr.disc, ctx.cube(), cone);
        if (!proper.proper) throw BlenderStepError(BlenderStepError::range, "preimage disc is not proper: " + proper.reason);
        if (pr.max_residual > tol / 10) throw BlenderStepError(BlenderStepError::bracketing, "root residual above tol/10");
        rec.pairs.push_back(pr.pair);
        chosen.push_back(pr.index);
        rec.max_residual = std::max(rec.max_residual, pr.max_residual);
        log_lip += std::log10(std::max(pr.base_lipschitz, 1e-300));
        const double next = std::log10(diam0) + log_lip;
        if (!(next < rec.log10_diameters.back())) throw BlenderStepError(BlenderStepError::non_nesting, "nested images stopped shrinking");
        rec.log10_diameters.push_back(next);
        discs.push_back(std::move(pr.disc));
      }
      // witness: center of the deepest disc carried down to the initial disc
      Eigen::VectorXd b = discs.back().node(discs.back().center_index());
      Eigen::VectorXd in, out;
      for (int i = depth; i >= 1; --i) {
        const Disc& prev = discs[static_cast<std::size_t>(i - 1)];
        NodeSolve ns = solve_node(prev, ctx.maps[chosen[static_cast<std::size_t>(i - 1)]], b, prev.eval(b).tail(prev.nc));
        in = ns.in;
        out = ns.out;
        b = ns.parent;
      }
      Eigen::VectorXd w(p.d);
      if (o == Orientation::cs) {
        w << out(0), in.segment(1, p.d1), out.tail(p.nv());
      } else {
        w << in(0), out.segment(1, p.d1), in.tail(p.nv());
      }
      rec.witness = w;
      Eigen::VectorXd on_graph = S0.eval(detail::gather(w, Bk.base));
      Eigen::VectorXd wv(1 + S0.nc);
      wv(0) = w(0);
      if (S0.nc > 0) wv.tail(S0.nc) = detail::gather(w, Bk.comp);
      rec.witness_offset = (wv - on_graph).lpNorm<Eigen::Infinity>();
      rec.membership = orbit_membership(w, rec.pairs, p, depth, o);
      const bool small = rec.log10_diameters.back() < std::log10(tol);
      rec.pass = small && rec.witness_offset <= tol && rec.membership.member;
      if (!small) rec.failure = "nested images not below tol";
      else if (rec.witness_offset > tol) rec.failure = "witness off the initial disc";
      else if (!rec.membership.member) rec.failure = "orbit leaves Pi: " + rec.membership.failure;
    } catch (const BlenderStepError& e) {
      rec.pass = false;
      rec.failure = std::string(step_error_name(e.kind())) + ": " + e.what();
    }
    if (rec.pass) ++cert.passed;
    cert.records.push_back(std::move(rec));
  }
  cert.pass = depth > 0 && cert.passed == trials;
  if (depth == 0) cert.note = "no refinement";
  return cert;
}

// CSV trace of the nested diameters: trial,step,k,m,log10_diameter
inline std::string diameter_trace_csv(const BlenderCertificate& c) {
  std::ostringstream os;
  os << "trial,step,k,m,log10_diameter\n";
  os.precision(17);
  for (std::size_t t = 0; t < c.records.size(); ++t) {
    const auto& r = c.records[t];
    for (std::size_t s = 0; s < r.log10_diameters.size(); ++s) {
      long k = s == 0 ? 0 : r.pairs[s - 1].k, m = s == 0 ? 0 : r.pairs[s - 1].m;
      os << t << "," << s << "," << k << "," << m << "," << r.log10_diameters[s] << "\n";
    }
  }
  return os.str();
}

}  // namespace blab
