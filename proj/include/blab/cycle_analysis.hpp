#pragma once

#include "blab/diophantine.hpp"
#include "blab/return_map.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace blab {

enum class CycleType { I, II, III, none };

inline const char* cycle_type_name(CycleType t) {
  switch (t) {
    case CycleType::I: return "I";
    case CycleType::II: return "II";
    case CycleType::III: return "III";
    case CycleType::none: return "n/a";
  }
  return "?";
}

struct Moduli {
  double theta = 0;
  double alpha = std::numeric_limits<double>::quiet_NaN();
  CycleType type = CycleType::none;
};

// Types are defined for real central multipliers only; the focus cases report n/a.
inline Moduli compute_moduli(const CycleParams& p) {
  const NondegeneracyReport nd = validate_nondegeneracy(p);
  if (!nd.all()) throw PreconditionError("compute_moduli: cycle is degenerate (" + std::string(nd.C4_label) + " or C1-C3 failed)");
  Moduli m;
  m.theta = static_cast<double>(-std::log(std::fabs(static_cast<long double>(p.lambda))) /
                                std::log(std::fabs(static_cast<long double>(p.gamma))));
  if (p.kind != Case::Saddle) return m;
  m.alpha = p.alpha();
  if (!std::isfinite(m.alpha)) throw PreconditionError("compute_moduli: alpha is undefined");
  const double s = p.a(0) * p.x_plus(0) * p.u_minus(0);
  if (p.lambda < 0 || p.gamma < 0) m.type = CycleType::III;
  else m.type = s > 0 ? CycleType::I : CycleType::II;
  return m;
}

struct RareCondition {
  bool applicable = false;
  bool holds = true;
  double distance = std::numeric_limits<double>::infinity();  // to the nearest excluded value
  double nearest = std::numeric_limits<double>::quiet_NaN();
  long s = 0;
  int l = 0, n = 0;  // 0 stands for the limit l or n -> infinity
};

struct RareReport {
  double theta = 0;
  bool rational = false;
  Fraction fraction;     // exact match when rational, best approximant otherwise
  RareCondition rare1, rare2;
  double value1 = 0;     // |ab|
  double value2 = 0;     // |u- / (a x+)|
  double violation_tol = 1e-9;
  int truncation = 64;
};

// Closure values |gamma|^(s/q) f with f = (1 - lambda^l)/(1 - gamma^-n), l, n <= trunc, plus the
// limit families f = 1 - lambda^l, 1/(1 - gamma^-n) and f = 1.
inline RareReport rational_theta_check(const CycleParams& p, long long max_den = 1000000, int trunc = 64) {
  if (p.kind != Case::Saddle) throw PreconditionError("rational_theta_check: needs real central multipliers");
  RareReport r;
  r.truncation = trunc;
  const long double lt = -std::log(std::fabs(static_cast<long double>(p.lambda))) /
                         std::log(std::fabs(static_cast<long double>(p.gamma)));
  r.theta = static_cast<double>(lt);
  const RationalCheck rc = rational_at_precision(lt, max_den);
  r.rational = rc.rational;
  r.fraction = rc.fraction;
  r.value1 = std::fabs(p.a(0) * p.b(0));
  r.value2 = std::fabs(p.u_minus(0) / (p.a(0) * p.x_plus(0)));
  if (!r.rational) return r;

  const long double lg = std::log(std::fabs(static_cast<long double>(p.gamma)));
  const long double q = static_cast<long double>(r.fraction.q);
  auto power = [&](long s) { return std::exp(lg * s / q); };

  RareCondition& c1 = r.rare1;
  c1.applicable = true;
  const long s0 = static_cast<long>(std::floor(q * std::log(static_cast<long double>(r.value1)) / lg));
  for (long s = s0 - 1; s <= s0 + 2; ++s) {
    const long double v = power(s);
    if (v < r.value1 / power(1) || v > r.value1 * power(1)) continue;
    const double d = static_cast<double>(std::fabs(v - r.value1));
    if (d < c1.distance) {
      c1.distance = d;
      c1.nearest = static_cast<double>(v);
      c1.s = s;
    }
  }
  c1.holds = c1.distance >= r.violation_tol;

  RareCondition& c2 = r.rare2;
  c2.applicable = true;
  const long double lam = p.lambda, gam = p.gamma;
  for (int l = 0; l <= trunc; ++l) {
    const long double num = l == 0 ? 1.0L : 1.0L - std::pow(lam, l);
    for (int n = 0; n <= trunc; ++n) {
      const long double den = n == 0 ? 1.0L : 1.0L - std::pow(gam, -n);
      const long double f = num / den;
      const long double sf = q * std::log(static_cast<long double>(r.value2) / f) / lg;
      for (long s = static_cast<long>(std::floor(sf)); s <= static_cast<long>(std::floor(sf)) + 1; ++s) {
        const long double v = power(s) * f;
        const double d = static_cast<double>(std::fabs(v - r.value2));
        if (d < c2.distance) {
          c2.distance = d;
          c2.nearest = static_cast<double>(v);
          c2.s = s;
          c2.l = l;
          c2.n = n;
        }
      }
    }
  }
  c2.holds = c2.distance >= r.violation_tol;
  return r;
}

enum class Family { u, s };

inline const char* family_name(Family f) { return f == Family::u ? "u" : "s"; }

struct ActivationInterval {
  Family family = Family::u;
  long index = 0;
  double center = 0, half_width = 0;
  double lo = 0, hi = 0;              // raw endpoints
  double inner_lo = 0, inner_hi = 0;  // shrunk by kappa * half_width on both sides
  bool contains_mu = false;
  bool contains(double mu) const { return mu >= inner_lo && mu <= inner_hi; }
};

struct ActivationSet {
  std::vector<ActivationInterval> u, s;
  double kappa = 0.1;
};

namespace detail {

inline ActivationInterval make_interval(Family f, long idx, long double center, long double half, double kappa, double mu) {
  ActivationInterval a;
  a.family = f;
  a.index = idx;
  a.center = static_cast<double>(center);
  a.half_width = static_cast<double>(half);
  a.lo = static_cast<double>(center - half);
  a.hi = static_cast<double>(center + half);
  a.inner_lo = static_cast<double>(center - (1.0L - kappa) * half);
  a.inner_hi = static_cast<double>(center + (1.0L - kappa) * half);
  a.contains_mu = a.contains(mu);
  return a;
}

inline void require_real(const CycleParams& p, const char* where) {
  if (p.kind != Case::Saddle) throw PreconditionError(std::string(where) + ": needs real central multipliers");
}

}  // namespace detail

// I^u_m: centre gamma^-m u-, half-width |gamma^-m / b| delta'/2.
inline ActivationInterval interval_u(const CycleParams& p, long m, double kappa = 0.1) {
  const long double g = std::pow(static_cast<long double>(p.gamma), -m);
  return detail::make_interval(Family::u, m, g * p.u_minus(0), 0.5L * std::fabs(g / p.b(0)) * p.delta_prime(), kappa, p.mu);
}

// I^s_k: centre -a lambda^k x+, half-width |a lambda^k| delta'/2.
inline ActivationInterval interval_s(const CycleParams& p, long k, double kappa = 0.1) {
  const long double l = std::pow(static_cast<long double>(p.lambda), k);
  return detail::make_interval(Family::s, k, -p.a(0) * l * p.x_plus(0), 0.5L * std::fabs(p.a(0) * l) * p.delta_prime(), kappa, p.mu);
}

inline ActivationSet activation_intervals(const CycleParams& p, long lo, long hi, double kappa = 0.1) {
  detail::require_real(p, "activation_intervals");
  if (lo < 1 || hi < lo) throw PreconditionError("activation_intervals: need 1 <= lo <= hi");
  if (!(kappa >= 0 && kappa < 1)) throw PreconditionError("activation_intervals: kappa must lie in [0,1)");
  ActivationSet out;
  out.kappa = kappa;
  for (long i = lo; i <= hi; ++i) {
    out.u.push_back(interval_u(p, i, kappa));
    out.s.push_back(interval_s(p, i, kappa));
  }
  return out;
}

struct SweepRow {
  double mu = 0;
  std::string hit_family = "none";
  long index = -1;            // hit index, or the nearest index of the family on mu's side
  double rescaled = 0;        // mu gamma^m for the u family, mu lambda^-k for the s family
  std::string label;
};

struct SweepTable {
  std::vector<SweepRow> rows;
  bool full_semantics = false;  // type I, irrational theta, positive multipliers
  std::string note;
};

namespace detail {

// Index whose centre c1 r^(i-1) (|r| < 1) is closest to mu in log scale.
inline long nearest_index(double mu, double c1, double r, long max_index) {
  const double e = std::log(std::fabs(mu / c1)) / std::log(std::fabs(r));
  return std::clamp(1L + static_cast<long>(std::llround(e)), 1L, max_index);
}

}  // namespace detail

// Labels are a function of the sign pattern and the interval hits only. For |alpha| < 1 the
// side where mu has the sign of u- carries no heterodimensional dynamics and the other side
// loses W^u(L1); |alpha| > 1 mirrors this with L2.
inline std::string regime_label(const CycleParams& p, const Moduli& mod, bool theta_rational, double mu,
                                const ActivationInterval* hit) {
  if (p.kind != Case::Saddle) return "robust-heterodimensional-candidate";
  if (theta_rational) return "hyperbolic-trivial";
  if (mu == 0) return "robust-heterodimensional-candidate";
  if (mod.type != CycleType::I || p.lambda < 0 || p.gamma < 0) return hit ? (hit->family == Family::u ? "O1-related" : "O2-related") : "unclassified";
  if (hit) return hit->family == Family::u ? "O1-related" : "O2-related";
  const bool u_side = (mu > 0) == (p.u_minus(0) > 0);
  if (std::fabs(mod.alpha) < 1) return u_side ? "hyperbolic-trivial" : "L1-escapes";
  return u_side ? "L2-escapes" : "hyperbolic-trivial";
}

inline SweepTable sweep_mu(const CycleParams& p, double mu_lo, double mu_hi, long samples, long max_index = 200,
                           double kappa = 0.1) {
  detail::require_real(p, "sweep_mu");
  if (samples < 1) throw PreconditionError("sweep_mu: resolution must be >= 1");
  if (!(mu_hi >= mu_lo)) throw PreconditionError("sweep_mu: empty mu range");
  const Moduli mod = compute_moduli(p);
  const bool rational = rational_at_precision(mod.theta).rational;
  ActivationSet iv = activation_intervals(p, 1, max_index, kappa);
  SweepTable t;
  t.full_semantics = mod.type == CycleType::I && !rational && p.lambda > 0 && p.gamma > 0;
  if (!t.full_semantics) t.note = "partial table: labels beyond interval hits need a type-I cycle with irrational theta";
  const double uc = p.u_minus(0) / p.gamma, sc = -p.a(0) * p.lambda * p.x_plus(0);
  for (long i = 0; i < samples; ++i) {
    SweepRow row;
    row.mu = samples == 1 ? mu_lo : mu_lo + (mu_hi - mu_lo) * static_cast<double>(i) / static_cast<double>(samples - 1);
    const ActivationInterval* hit = nullptr;
    for (const auto* fam : {&iv.u, &iv.s})
      for (const auto& a : *fam)
        if (!hit && a.contains(row.mu)) hit = &a;
    if (row.mu != 0) {
      Family f;
      long idx;
      if (hit) {
        f = hit->family;
        idx = hit->index;
      } else {
        f = (row.mu > 0) == (uc > 0) ? Family::u : Family::s;
        idx = f == Family::u ? detail::nearest_index(row.mu, uc, 1.0 / p.gamma, max_index)
                             : detail::nearest_index(row.mu, sc, p.lambda, max_index);
      }
      row.hit_family = hit ? family_name(f) : "none";
      row.index = idx;
      row.rescaled = f == Family::u ? static_cast<double>(row.mu * std::pow(static_cast<long double>(p.gamma), idx))
                                    : static_cast<double>(row.mu * std::pow(static_cast<long double>(p.lambda), -idx));
    }
    CycleParams at = p;
    at.mu = row.mu;
    row.label = regime_label(at, mod, rational, row.mu, hit);
    t.rows.push_back(row);
  }
  return t;
}

struct SecondaryMu {
  long k = 0, m = 0;
  double product = 0;     // a b lambda^k gamma^m
  double mu_lambda = 0;   // -a x+ lambda^k
  double mu_gamma = 0;    // u- gamma^-m
  double discrepancy = 0;           // |mu_lambda - mu_gamma|
  double relative_discrepancy = 0;  // divided by |mu_lambda|
};

// Both leading-order values of the secondary-cycle splitting parameter for each pair; the pairs
// must satisfy a b lambda^k gamma^m ~ -alpha to relative tolerance rel_tol.
inline std::vector<SecondaryMu> secondary_cycle_mu(const CycleParams& p, const std::vector<std::pair<long, long>>& pairs,
                                                   double rel_tol = 0.05) {
  const Moduli mod = compute_moduli(p);
  if (mod.type != CycleType::II) throw PreconditionError("secondary_cycle_mu: needs a type-II cycle (a x+ u- < 0)");
  std::vector<SecondaryMu> out;
  for (auto [k, m] : pairs) {
    if (k < 1 || m < 1) throw PreconditionError("secondary_cycle_mu: k and m must be >= 1");
    SecondaryMu s;
    s.k = k;
    s.m = m;
    const long double lk = std::pow(static_cast<long double>(p.lambda), k);
    const long double gm = std::pow(static_cast<long double>(p.gamma), -m);
    s.product = static_cast<double>(p.a(0) * p.b(0) * lk / gm);
    if (std::fabs(s.product + mod.alpha) > rel_tol * std::fabs(mod.alpha))
      throw PreconditionError("secondary_cycle_mu: pair (" + std::to_string(k) + "," + std::to_string(m) +
                              ") has a b lambda^k gamma^m = " + std::to_string(s.product) + ", not near -alpha");
    s.mu_lambda = static_cast<double>(-p.a(0) * p.x_plus(0) * lk);
    s.mu_gamma = static_cast<double>(p.u_minus(0) * gm);
    s.discrepancy = std::fabs(s.mu_lambda - s.mu_gamma);
    s.relative_discrepancy = s.discrepancy / std::fabs(s.mu_lambda);
    out.push_back(s);
  }
  return out;
}

struct ThetaPrime {
  double leading = 0;   // theta / m*
  double gamma_prime = 0;
  double direct = 0;    // -ln|lambda| / ln|gamma'|
};

inline ThetaPrime theta_prime_estimate(const CycleParams& p, long m_star) {
  if (m_star < 1) throw PreconditionError("theta_prime_estimate: m* must be >= 1");
  const Moduli mod = compute_moduli(p);
  if (p.kind != Case::Saddle) throw PreconditionError("theta_prime_estimate: needs real central multipliers");
  ThetaPrime t;
  t.leading = mod.theta / static_cast<double>(m_star);
  const long double gp = -static_cast<long double>(mod.alpha) * std::pow(static_cast<long double>(p.gamma), m_star);
  t.gamma_prime = static_cast<double>(gp);
  if (std::fabs(gp) <= 1.0L)
    throw PreconditionError("theta_prime_estimate: |gamma'| = " + std::to_string(std::fabs(t.gamma_prime)) + " <= 1, m* too small");
  t.direct = static_cast<double>(-std::log(std::fabs(static_cast<long double>(p.lambda))) / std::log(std::fabs(gp)));
  return t;
}

struct FocusSequence {
  std::string index_name;       // "k" (saddle-focus) or "m" (double-focus)
  std::vector<long> indices;
  double threshold = 0;
  bool reciprocal = false;      // u2- = 0: cot is searched instead of tan
  double eta = 0;               // the phase the condition is evaluated at
  std::vector<std::string> advisories;
};

namespace detail {

inline long double phase(long i, double w, double eta) {
  return std::fmod(static_cast<long double>(i) * w, 2.0L * M_PIl) + eta;
}

inline void rotation_advisory(double w, std::vector<std::string>& adv) {
  const RationalCheck rc = rational_at_precision(static_cast<long double>(w) / (2.0L * M_PIl), 1000, 1e-12L);
  if (rc.rational)
    adv.push_back("rotation number " + std::to_string(rc.fraction.p) + "/" + std::to_string(rc.fraction.q) +
                  " is rational: the sequence visits at most " + std::to_string(rc.fraction.q) + " residues");
}

}  // namespace detail

// Saddle-focus: k with |B sin(k w + eta2)| < (q delta / 2) |A sin(k w + eta1)|.
// Double-focus: m with |tan(m w2 + eta3) + u1-/u2-| < tol, |cos| above the guard.
inline FocusSequence focus_sequences(const CycleParams& p, long bound, double tol = 5e-2, double guard = 1e-6) {
  if (p.kind == Case::Saddle) throw PreconditionError("focus_sequences: needs a focus case");
  if (bound < 1) throw PreconditionError("focus_sequences: bound must be >= 1");
  const ReturnCoeffs rc = return_coeffs(p, 1, 1);
  FocusSequence fs;
  if (p.kind == Case::SaddleFocus) {
    fs.index_name = "k";
    fs.threshold = p.delta_prime() / 2;
    fs.eta = rc.eta2;
    const double w = p.rot_stable();
    detail::rotation_advisory(w, fs.advisories);
    for (long k = 1; k <= bound; ++k) {
      const long double s1 = std::sin(detail::phase(k, w, rc.eta1)), s2 = std::sin(detail::phase(k, w, rc.eta2));
      if (std::fabs(rc.B * s2) < fs.threshold * std::fabs(rc.A * s1)) fs.indices.push_back(k);
    }
  } else {
    fs.index_name = "m";
    fs.threshold = tol;
    fs.eta = rc.eta3;
    const double w = p.omega2;
    detail::rotation_advisory(w, fs.advisories);
    const double u1 = p.u_minus(0), u2 = p.u_minus(1);
    fs.reciprocal = u2 == 0.0;
    if (fs.reciprocal) fs.advisories.push_back("u2- = 0: target is a pole of tan, searching |cot| < tol");
    for (long m = 1; m <= bound; ++m) {
      const long double ph = detail::phase(m, w, rc.eta3);
      const long double c = std::cos(ph), s = std::sin(ph);
      if (fs.reciprocal) {
        if (std::fabs(s) > guard && std::fabs(c / s) < tol) fs.indices.push_back(m);
      } else if (std::fabs(c) > guard && std::fabs(s / c + u1 / u2) < tol) {
        fs.indices.push_back(m);
      }
    }
  }
  if (fs.indices.empty()) fs.advisories.push_back("no index up to the bound satisfies the condition");
  return fs;
}

struct RegimeReport {
  Moduli moduli;
  NondegeneracyReport nondegeneracy;
  RareReport rare;
  bool rare_evaluated = false;
  std::vector<ActivationInterval> hits;
  std::string label;
  bool prediction_conditional = false;  // rational theta with a rare condition violated
  bool certified = false;
  std::vector<std::string> notes;
};

inline RegimeReport classify(const CycleParams& p, long max_index = 200, double kappa = 0.1, long long max_den = 1000000) {
  RegimeReport r;
  r.nondegeneracy = validate_nondegeneracy(p);
  r.moduli = compute_moduli(p);
  bool rational = false;
  if (p.kind == Case::Saddle) {
    r.rare = rational_theta_check(p, max_den);
    r.rare_evaluated = true;
    rational = r.rare.rational;
    if (rational && !(r.rare.rare1.holds && r.rare.rare2.holds)) {
      r.prediction_conditional = true;
      r.notes.push_back("rational theta with a violated rare condition: the trivial-dynamics prediction is conditional");
    }
    if (p.mu != 0) {
      ActivationSet iv = activation_intervals(p, 1, max_index, kappa);
      for (const auto* fam : {&iv.u, &iv.s})
        for (const auto& a : *fam)
          if (a.contains_mu) r.hits.push_back(a);
    }
  } else {
    r.notes.push_back("focus case: types and activation intervals are defined for real multipliers only");
  }
  const ActivationInterval* hit = r.hits.empty() ? nullptr : &r.hits.front();
  r.label = regime_label(p, r.moduli, rational, p.mu, hit);
  if (r.label == "L1-escapes" || r.label == "L2-escapes") r.label = "hyperbolic-trivial";
  if (r.label == "unclassified") {
    r.label = "robust-heterodimensional-candidate";
    r.notes.push_back("type II or III: the label is the tied-cycle prediction for a generic unfolding");
  }
  return r;
}

}  // namespace blab
