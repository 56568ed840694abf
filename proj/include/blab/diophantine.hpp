#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace blab {

struct Fraction {
  long long p = 0, q = 1;
  long double error = 0;  // |x - p/q|
};

// Partial quotients of x, stopping once the remainder is below working precision.
inline std::vector<long long> continued_fraction(long double x, int max_terms = 64) {
  std::vector<long long> a;
  for (int i = 0; i < max_terms; ++i) {
    long double f = std::floor(x);
    if (std::fabs(f) > 9e17L) break;
    a.push_back(static_cast<long long>(f));
    long double r = x - f;
    if (r < 1e-18L) break;
    x = 1.0L / r;
  }
  return a;
}

inline std::vector<Fraction> convergents(long double x, long long max_den) {
  std::vector<Fraction> out;
  long long p0 = 1, q0 = 0, p1 = 0, q1 = 1;  // p_{-1}/q_{-1}, p_{-2}/q_{-2}
  for (long long a : continued_fraction(x)) {
    long long p = a * p0 + p1, q = a * q0 + q1;
    if (q > max_den) break;
    out.push_back({p, q, std::fabs(x - static_cast<long double>(p) / q)});
    p1 = p0;
    q1 = q0;
    p0 = p;
    q0 = q;
  }
  return out;
}

// Best approximation p/q with q <= max_den, semiconvergents included.
inline Fraction best_rational(long double x, long long max_den) {
  Fraction best{static_cast<long long>(std::llround(x)), 1, std::fabs(x - std::llround(x))};
  long long p0 = 1, q0 = 0, p1 = 0, q1 = 1;
  for (long long a : continued_fraction(x)) {
    for (long long t = (a + 1) / 2; t <= a; ++t) {
      long long p = t * p0 + p1, q = t * q0 + q1;
      if (q > max_den) break;
      long double e = std::fabs(x - static_cast<long double>(p) / q);
      if (e < best.error) best = {p, q, e};
    }
    long long p = a * p0 + p1, q = a * q0 + q1;
    if (q > max_den) break;
    p1 = p0;
    q1 = q0;
    p0 = p;
    q0 = q;
  }
  return best;
}

struct RationalCheck {
  bool rational = false;
  Fraction fraction;
};

// x counts as rational when some convergent with q <= max_den matches it to tol.
inline RationalCheck rational_at_precision(long double x, long long max_den = 1000000, long double tol = 1e-14L) {
  RationalCheck rc;
  for (const Fraction& f : convergents(x, max_den)) {
    if (f.error <= tol) {
      rc.rational = true;
      rc.fraction = f;
      return rc;
    }
  }
  rc.fraction = best_rational(x, max_den);
  return rc;
}

}  // namespace blab
