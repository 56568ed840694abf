#pragma once

#include "blab/cycle_model.hpp"
#include "blab/diophantine.hpp"
#include "blab/return_map.hpp"

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <climits>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace blab {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

enum class Parity { any, even };

struct KmPair {
  long k = 0, m = 0;
  long double value = 0;  // lambda^k gamma^m, signed
  bool k_even = false, m_even = false;
};

inline KmPair make_pair_km(long k, long m, long double value) {
  return {k, m, value, k % 2 == 0, m % 2 == 0};
}

inline Rational rational_pow(const Rational& x, long n) {
  Rational r = 1, b = x;
  bool inv = n < 0;
  unsigned long e = static_cast<unsigned long>(inv ? -n : n);
  while (e) {
    if (e & 1) r *= b;
    b *= b;
    e >>= 1;
  }
  return inv ? Rational(1) / r : r;
}

// Decimal expansion of a rational. Exact when the reduced denominator is 2^i 5^j (always the
// case for values built from doubles); otherwise 40 significant digits prefixed with '~'.
inline std::string exact_decimal(const Rational& r) {
  BigInt num = boost::multiprecision::numerator(r), den = boost::multiprecision::denominator(r);
  const bool neg = num < 0;
  if (neg) num = -num;
  BigInt d = den;
  int twos = 0, fives = 0;
  while (d % 2 == 0) {
    d /= 2;
    ++twos;
  }
  while (d % 5 == 0) {
    d /= 5;
    ++fives;
  }
  std::string out = neg ? "-" : "";
  if (d != 1) {
    std::ostringstream os;
    os.precision(40);
    os << boost::multiprecision::cpp_bin_float_50(r);
    return "~" + os.str();
  }
  const int e = std::max(twos, fives);
  BigInt scaled = num * boost::multiprecision::pow(BigInt(2), e - twos) * boost::multiprecision::pow(BigInt(5), e - fives);
  std::string digits = scaled.str();
  if (e == 0) return out + digits;
  if (static_cast<int>(digits.size()) <= e) digits = std::string(e - digits.size() + 1, '0') + digits;
  std::string ip = digits.substr(0, digits.size() - e), fp = digits.substr(digits.size() - e);
  while (!fp.empty() && fp.back() == '0') fp.pop_back();
  return out + ip + (fp.empty() ? "" : "." + fp);
}

inline long double theta_of(const CycleParams& p) {
  return -std::log(std::fabs(static_cast<long double>(p.lambda))) / std::log(std::fabs(static_cast<long double>(p.gamma)));
}

inline Parity default_parity(const CycleParams& p) {
  return (p.lambda < 0 || p.gamma < 0) ? Parity::even : Parity::any;
}

struct KmSearch {
  std::vector<KmPair> pairs;
  std::optional<KmPair> best;    // closest pair seen, also when the list is empty
  long double best_error = std::numeric_limits<long double>::infinity();  // |m - k theta - target|
  std::string advisory;
  bool empty() const { return pairs.empty(); }
};

// All (k, m), 1 <= k <= k_max, m >= 1, with |m - k theta - target| < tol / ln|gamma|, sorted by k.
// value holds |gamma|^(m - k theta) = |lambda^k gamma^m|.
inline KmSearch search_km(long double theta, long double target, double tol, long k_max, Parity parity,
                          long double ln_gamma) {
  if (!(tol > 0)) throw PreconditionError("search_km: tol must be positive");
  if (k_max < 1) throw PreconditionError("search_km: k_max must be >= 1");
  if (!(ln_gamma > 0)) throw PreconditionError("search_km: ln|gamma| must be positive");
  KmSearch res;
  const RationalCheck rc = rational_at_precision(theta);
  if (rc.rational)
    res.advisory = "theta is rational to working precision (" + std::to_string(rc.fraction.p) + "/" +
                   std::to_string(rc.fraction.q) + "); m - k*theta only takes values on a lattice";
  const long double eps = static_cast<long double>(tol) / ln_gamma;
  for (long k = 1; k <= k_max; ++k) {
    if (parity == Parity::even && (k & 1)) continue;
    const long double c = static_cast<long double>(k) * theta + target;
    long lo = static_cast<long>(std::ceil(c - eps)), hi = static_cast<long>(std::floor(c + eps));
    for (long m = std::max(lo, 1L); m <= hi; ++m) {
      if (parity == Parity::even && (m & 1)) continue;
      const long double err = std::fabs(static_cast<long double>(m) - c);
      if (err < eps) res.pairs.push_back(make_pair_km(k, m, std::exp((m - k * theta) * ln_gamma)));
    }
    long mn = std::max(1L, std::lround(c));
    if (parity == Parity::even && (mn & 1)) mn += (static_cast<long double>(mn) < c) ? 1 : -1;
    if (mn < 1) mn += 2;
    const long double err = std::fabs(static_cast<long double>(mn) - c);
    if (err < res.best_error) {
      res.best_error = err;
      res.best = make_pair_km(k, mn, std::exp((mn - k * theta) * ln_gamma));
    }
  }
  if (res.pairs.empty() && res.advisory.empty())
    res.advisory = "no pair within k_max; best found has |m - k*theta - target| = " +
                   std::to_string(static_cast<double>(res.best_error));
  return res;
}

// Same search on the model's multipliers; value is the signed lambda^k gamma^m.
inline KmSearch search_km(const CycleParams& p, long double target, double tol, long k_max, Parity parity) {
  KmSearch r = search_km(theta_of(p), target, tol, k_max, parity, std::log(std::fabs(static_cast<long double>(p.gamma))));
  for (KmPair& q : r.pairs) q.value = power_product(p.lambda, p.gamma, q.k, q.m);
  if (r.best) r.best->value = power_product(p.lambda, p.gamma, r.best->k, r.best->m);
  return r;
}

namespace detail {

inline Rational exact(double x) { return Rational(x); }

inline void require_saddle_alpha(const CycleParams& p, const char* who) {
  if (p.kind != Case::Saddle) throw PreconditionError(std::string(who) + ": needs the saddle case");
  if (std::fabs(std::fabs(p.alpha()) - 1.0) < 1e-12)
    throw PreconditionError(std::string(who) + ": |alpha| = 1 (C4.1 violated)");
}

// m range for which |ab lambda^k gamma^m| can fall in [amin, amax] (amin may be 0, amax may be inf).
inline std::pair<long, long> m_window(const CycleParams& p, long k, long double amin, long double amax, long m_lo,
                                      long m_hi) {
  const long double lg = std::log(std::fabs(static_cast<long double>(p.gamma)));
  const long double base = std::log(std::fabs(static_cast<long double>(p.a(0)) * p.b(0))) +
                           k * std::log(std::fabs(static_cast<long double>(p.lambda)));
  long lo = m_lo, hi = m_hi;
  if (amin > 0) lo = std::max(lo, static_cast<long>(std::floor((std::log(amin) - base) / lg)) - 1);
  if (std::isfinite(static_cast<double>(amax)))
    hi = std::min(hi, static_cast<long>(std::ceil((std::log(amax) - base) / lg)) + 1);
  return {lo, hi};
}

inline std::pair<long double, long double> abs_range(long double lo, long double hi) {
  if (lo > hi) std::swap(lo, hi);
  if (lo <= 0 && hi >= 0) return {0.0L, std::max(-lo, hi)};
  return {std::min(std::fabs(lo), std::fabs(hi)), std::max(std::fabs(lo), std::fabs(hi))};
}

}  // namespace detail

// Pairs N < k, m <= k_max balancing the return into the box. For |alpha| < 1:
// |ab lambda^k gamma^m x+ - b u-| <= (2/3)(1 - |alpha|) delta. For |alpha| > 1 the same bound is
// imposed on the inverse skeleton: |B/A| <= (2/3)(1 - 1/|alpha|) delta.
// Candidates come from a long double window; membership is decided in exact rational arithmetic.
inline std::vector<KmPair> build_P_N(const CycleParams& p, long N, long k_max) {
  detail::require_saddle_alpha(p, "build_P_N");
  if (N < 0 || k_max < 1) throw PreconditionError("build_P_N: need N >= 0 and k_max >= 1");
  const double alpha = p.alpha();
  const bool inverse = std::fabs(alpha) > 1.0;
  const long double a = p.a(0), b = p.b(0), xp = p.x_plus(0), um = p.u_minus(0), dl = p.delta;
  const long double c = inverse ? (2.0L / 3.0L) * (1.0L - 1.0L / std::fabs(alpha)) * dl
                                : (2.0L / 3.0L) * (1.0L - std::fabs(alpha)) * dl;
  // allowed range of A = ab lambda^k gamma^m
  long double Alo, Ahi;
  if (!inverse) {
    Alo = (b * um - c) / xp;
    Ahi = (b * um + c) / xp;
  } else {
    const long double w1 = xp - c, w2 = xp + c;
    if (w1 <= 0 && w2 >= 0) {
      Alo = -std::numeric_limits<long double>::infinity();
      Ahi = std::numeric_limits<long double>::infinity();
    } else {
      Alo = b * um / w1;
      Ahi = b * um / w2;
    }
  }
  auto [amin, amax] = detail::abs_range(Alo, Ahi);
  const Rational ra = detail::exact(p.a(0)), rb = detail::exact(p.b(0)), rx = detail::exact(p.x_plus(0)),
                 ru = detail::exact(p.u_minus(0)), rl = detail::exact(p.lambda), rg = detail::exact(p.gamma),
                 rd = detail::exact(p.delta);
  const Rational ral = abs(rb * ru / rx);
  const Rational rc = inverse ? Rational(2, 3) * (1 - 1 / ral) * rd : Rational(2, 3) * (1 - ral) * rd;
  std::vector<KmPair> out;
  for (long k = N + 1; k <= k_max; ++k) {
    auto [mlo, mhi] = detail::m_window(p, k, amin, amax, N + 1, k_max);
    for (long m = std::max(mlo, N + 1); m <= mhi; ++m) {
      const long double A = a * b * power_product(p.lambda, p.gamma, k, m);
      const long double lhs = inverse ? std::fabs(xp - b * um / A) : std::fabs(A * xp - b * um);
      if (lhs > c * (1 + 1e-12L)) continue;
      const Rational RA = ra * rb * rational_pow(rl, k) * rational_pow(rg, m);
      const Rational B = RA * rx - rb * ru;
      const Rational L = inverse ? Rational(abs(B / RA)) : Rational(abs(B));
      if (L <= rc) out.push_back(make_pair_km(k, m, power_product(p.lambda, p.gamma, k, m)));
    }
  }
  return out;
}

enum class Orientation { cs, cu };

inline const char* orientation_name(Orientation o) { return o == Orientation::cs ? "cs" : "cu"; }

struct CoveringSet {
  Orientation orientation = Orientation::cs;
  std::vector<KmPair> pairs;
  std::vector<double> rho;
  // skeleton X -> A X + B of each pair (for cu: of the inverse map), exact
  std::vector<Rational> A, B;
  std::vector<Rational> lo, hi;  // E_j
  std::vector<Rational> overlaps;  // |E_j ∩ E_{j+1}|, signed
  double delta = 0, delta_prime = 0;  // delta_prime = q * delta as a double
  Rational delta_prime_exact;          // exact product q * delta of the input doubles
  double alpha = 0;                    // alpha of the model
  double alpha_eff = 0;                // alpha (cs) or 1/alpha (cu)
  long N = 0, k_max = 0;

  std::size_t size() const { return pairs.size(); }
};

// Exact skeleton of one pair in the chosen orientation.
inline std::pair<Rational, Rational> exact_skeleton(const CycleParams& p, long k, long m, Orientation o) {
  const Rational A = Rational(p.a(0)) * Rational(p.b(0)) * rational_pow(Rational(p.lambda), k) *
                     rational_pow(Rational(p.gamma), m);
  const Rational B = A * Rational(p.x_plus(0)) - Rational(p.b(0)) * Rational(p.u_minus(0)) +
                     Rational(p.b(0)) * rational_pow(Rational(p.gamma), m) * Rational(p.mu);
  if (o == Orientation::cs) return {A, B};
  return {1 / A, -B / A};
}

// Covering of [-delta', delta'] by images of [-delta', delta'] under n skeleton maps whose
// constant terms sit on the grid rho_j delta, each within delta'|alpha|/8 of its target.
inline CoveringSet build_covering_set(const CycleParams& p, Orientation o = Orientation::cs, long N = 10,
                                      long k_max = 100000) {
  detail::require_saddle_alpha(p, "build_covering_set");
  if (p.mu != 0.0) throw PreconditionError("build_covering_set: needs mu = 0");
  const double alpha = p.alpha();
  if (o == Orientation::cs && !(std::fabs(alpha) < 1))
    throw PreconditionError("build_covering_set: cs orientation needs |alpha| < 1");
  if (o == Orientation::cu && !(std::fabs(alpha) > 1))
    throw PreconditionError("build_covering_set: cu orientation needs |alpha| > 1");
  const long double theta = theta_of(p);
  const RationalCheck rc = rational_at_precision(theta);
  if (rc.rational)
    throw PreconditionError("build_covering_set: theta is rational to working precision (" + std::to_string(rc.fraction.p) +
                            "/" + std::to_string(rc.fraction.q) + ")");
  CoveringSet cs;
  cs.orientation = o;
  cs.delta = p.delta;
  cs.delta_prime = p.delta_prime();
  cs.delta_prime_exact = Rational(p.q) * Rational(p.delta);
  cs.alpha = alpha;
  cs.alpha_eff = o == Orientation::cs ? alpha : 1.0 / alpha;
  cs.N = N;
  cs.k_max = k_max;
  const double ae = std::fabs(cs.alpha_eff);
  const long n = static_cast<long>(std::ceil(4.0 / ae + 1.0));
  const double dp = cs.delta_prime, dl = p.delta;
  const Rational slack = cs.delta_prime_exact * Rational(ae) / 4;
  const double slack_d = dp * ae / 4;
  const Parity parity = default_parity(p);
  const long double lnG = std::log(std::fabs(static_cast<long double>(p.gamma)));
  const long double a = p.a(0), b = p.b(0), xp = p.x_plus(0), um = p.u_minus(0);
  for (long j = 1; j <= n; ++j) {
    const double rho = -dp / dl + static_cast<double>(j - 1) * 2.0 * dp / (static_cast<double>(n - 1) * dl);
    const long double target_B = static_cast<long double>(rho) * dl;
    // lambda^k gamma^m that puts the constant term exactly on target
    const long double L = o == Orientation::cs ? (target_B + b * um) / (a * b * xp) : um / (a * (target_B + xp));
    const long double scale = o == Orientation::cs ? std::fabs(target_B + b * um) : std::fabs(target_B + xp);
    if (!(L > 0) && parity == Parity::even)
      throw PreconditionError("build_covering_set: target for rho_j = " + std::to_string(rho) +
                              " needs a negative lambda^k gamma^m, unavailable with even pairs");
    if (L == 0 || !std::isfinite(static_cast<double>(L)))
      throw PreconditionError("build_covering_set: degenerate target at rho_j = " + std::to_string(rho));
    const double tol = static_cast<double>(0.9L * slack_d / scale);
    KmSearch s = search_km(theta, std::log(std::fabs(L)) / lnG, tol, k_max, parity, lnG);
    const Rational rho_delta = Rational(rho) * Rational(dl);
    bool found = false, out_of_range = false;
    for (const KmPair& c : s.pairs) {
      if (c.k <= N || c.m <= N) continue;
      if (!in_double_range(p, c.k, c.m)) {
        out_of_range = true;
        continue;
      }
      const long double v = power_product(p.lambda, p.gamma, c.k, c.m);
      if ((v > 0) != (L > 0)) continue;
      auto [A, B] = exact_skeleton(p, c.k, c.m, o);
      if (abs(B - rho_delta) > slack) continue;
      cs.pairs.push_back(make_pair_km(c.k, c.m, v));
      cs.rho.push_back(rho);
      cs.A.push_back(A);
      cs.B.push_back(B);
      const Rational half = abs(A) * cs.delta_prime_exact;
      cs.lo.push_back(B - half);
      cs.hi.push_back(B + half);
      found = true;
      break;
    }
    if (!found)
      throw ConvergenceError("build_covering_set: no pair with N < k, m and k <= " + std::to_string(k_max) +
                             " realizes rho_j = " + std::to_string(rho) + " (j = " + std::to_string(j) + ")" +
                             (out_of_range ? "; some candidates were skipped for leaving double range" : ""));
  }
  for (std::size_t j = 0; j + 1 < cs.size(); ++j)
    cs.overlaps.push_back(std::min(cs.hi[j], cs.hi[j + 1]) - std::max(cs.lo[j], cs.lo[j + 1]));
  return cs;
}

// Drops interval j (for mutation tests and thinning experiments).
inline CoveringSet remove_interval(CoveringSet cs, std::size_t j) {
  if (j >= cs.size()) throw PreconditionError("remove_interval: index out of range");
  cs.pairs.erase(cs.pairs.begin() + j);
  cs.rho.erase(cs.rho.begin() + j);
  cs.A.erase(cs.A.begin() + j);
  cs.B.erase(cs.B.begin() + j);
  cs.lo.erase(cs.lo.begin() + j);
  cs.hi.erase(cs.hi.begin() + j);
  cs.overlaps.clear();
  for (std::size_t i = 0; i + 1 < cs.size(); ++i)
    cs.overlaps.push_back(std::min(cs.hi[i], cs.hi[i + 1]) - std::max(cs.lo[i], cs.lo[i + 1]));
  return cs;
}

struct CoverReport {
  bool covered = false;
  bool overlap_ok = false;
  bool overlap_applicable = false;  // needs two or more intervals
  Rational min_overlap;
  Rational overlap_threshold;  // delta'|alpha|/2
  Rational max_gap;            // 0 when covered
  Rational gap_start;          // left end of the largest gap
  Rational target;             // delta' used for [-delta', delta']

  bool ok() const { return covered && (overlap_ok || !overlap_applicable); }
};

// Union of the open intervals against [-t, t], t = delta' as an exact rational.
inline CoverReport verify_covering(const CoveringSet& cs) {
  CoverReport r;
  const Rational t = cs.delta_prime_exact;
  r.target = t;
  r.overlap_threshold = t * abs(Rational(cs.alpha_eff)) / 2;
  const std::size_t n = cs.size();
  Rational x = -t;
  bool inclusive = false;  // after a gap, x itself is already counted as uncovered
  bool seen_gap = false;
  r.covered = n > 0;
  if (n == 0) {
    r.max_gap = 2 * t;
    r.gap_start = -t;
  }
  while (n > 0 && x <= t) {
    std::optional<Rational> reach;
    for (std::size_t j = 0; j < n; ++j) {
      const bool starts = inclusive ? cs.lo[j] <= x : cs.lo[j] < x;
      if (starts && cs.hi[j] > x && (!reach || cs.hi[j] > *reach)) reach = cs.hi[j];
    }
    if (reach) {
      x = *reach;
      inclusive = false;
      continue;
    }
    r.covered = false;
    std::optional<Rational> next;
    for (std::size_t j = 0; j < n; ++j)
      if (cs.lo[j] >= x && (!next || cs.lo[j] < *next)) next = cs.lo[j];
    const Rational end = next ? std::min(*next, t) : t;
    if (!seen_gap || end - x > r.max_gap) {
      seen_gap = true;
      r.max_gap = end - x;
      r.gap_start = x;
    }
    if (!next || *next > t) break;
    x = *next;
    inclusive = true;
  }
  r.overlap_applicable = n >= 2;
  if (r.overlap_applicable) {
    r.overlap_ok = true;
    for (std::size_t j = 0; j + 1 < n; ++j) {
      const Rational ov = std::min(cs.hi[j], cs.hi[j + 1]) - std::max(cs.lo[j], cs.lo[j + 1]);
      if (j == 0 || ov < r.min_overlap) r.min_overlap = ov;
      if (!(ov > r.overlap_threshold)) r.overlap_ok = false;
    }
  }
  return r;
}

// One simultaneous condition: |sign * n + coef * k - target| < tol, n an integer.
struct LinearTarget {
  int sign = 1;
  long double coef = 0;
  long double target = 0;
  double tol = 0;
  long min_n = LONG_MIN;
};

struct SimTuple {
  long k = 0;
  std::vector<long> n;
  long double worst = 0;  // largest residual / tol over the conditions
};

struct SimSearch {
  std::vector<SimTuple> tuples;
  std::optional<SimTuple> best;
  std::vector<std::string> advisories;
  bool empty() const { return tuples.empty(); }
};

// Linear in k_max: each integer is the nearest solution of its own form for the given k.
inline SimSearch search_simultaneous(const std::vector<LinearTarget>& targets, long k_max) {
  if (targets.size() < 2 || targets.size() > 3) throw PreconditionError("search_simultaneous: needs 2 or 3 targets");
  if (k_max < 1) throw PreconditionError("search_simultaneous: k_max must be >= 1");
  for (const auto& t : targets) {
    if (!(t.tol > 0)) throw PreconditionError("search_simultaneous: tol must be positive");
    if (t.sign != 1 && t.sign != -1) throw PreconditionError("search_simultaneous: sign must be +1 or -1");
  }
  SimSearch res;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const RationalCheck rc = rational_at_precision(targets[i].coef);
    if (rc.rational)
      res.advisories.push_back("coefficient " + std::to_string(i) + " is rational (" + std::to_string(rc.fraction.p) + "/" +
                               std::to_string(rc.fraction.q) + "); its form only reaches " + std::to_string(rc.fraction.q) +
                               " residues mod 1");
  }
  for (long k = 1; k <= k_max; ++k) {
    SimTuple t;
    t.k = k;
    bool ok = true;
    for (const auto& c : targets) {
      const long double real = (c.target - c.coef * k) / c.sign;
      long n = std::max(c.min_n, std::lround(real));
      const long double r = std::fabs(c.sign * static_cast<long double>(n) + c.coef * k - c.target);
      t.n.push_back(n);
      t.worst = std::max(t.worst, r / c.tol);
      if (!(r < c.tol)) ok = false;
    }
    if (ok) res.tuples.push_back(t);
    if (!res.best || t.worst < res.best->worst) res.best = t;
  }
  if (res.tuples.empty())
    res.advisories.push_back("no tuple within k_max; best found at k = " + std::to_string(res.best->k) +
                             " with residual/tol = " + std::to_string(static_cast<double>(res.best->worst)));
  return res;
}

}  // namespace blab
