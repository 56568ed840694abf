#include "blab/covering_engine.hpp"
#include "blab/presets.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <chrono>
#include <cmath>

using namespace blab;
using oracle::HP;

namespace {

const long double kTheta = std::log(2.0L) / std::log(3.0L);
const long double kLn3 = std::log(3.0L);

bool has(const std::vector<KmPair>& v, long k, long m) {
  for (const KmPair& q : v)
    if (q.k == k && q.m == m) return true;
  return false;
}

// |m - k theta - t| evaluated with theta from the doubles lambda, gamma in 50 digits
HP exact_residual(double lambda, double gamma, long k, long m, long double t) {
  const HP th = -log(abs(HP(lambda))) / log(abs(HP(gamma)));
  return abs(HP(m) - HP(k) * th - HP(t));
}

CoveringSet synthetic(std::vector<std::pair<Rational, Rational>> iv, const Rational& dp, double alpha) {
  CoveringSet cs;
  cs.delta_prime_exact = dp;
  cs.delta_prime = dp.convert_to<double>();
  cs.alpha = cs.alpha_eff = alpha;
  for (auto& [lo, hi] : iv) {
    cs.lo.push_back(lo);
    cs.hi.push_back(hi);
    cs.pairs.push_back(KmPair{});
    cs.rho.push_back(0);
    cs.A.push_back(0);
    cs.B.push_back(0);
  }
  return cs;
}

std::vector<std::pair<Rational, Rational>> intervals(const CoveringSet& cs) {
  std::vector<std::pair<Rational, Rational>> v;
  for (std::size_t j = 0; j < cs.size(); ++j) v.push_back({cs.lo[j], cs.hi[j]});
  return v;
}

}  // namespace

TEST_CASE("search_km finds (20,12) for the REF1 target") {
  const long double t = std::log(0.5L) / kLn3;
  CHECK(static_cast<double>(t) == doctest::Approx(-0.6309298).epsilon(1e-7));
  const KmSearch s = search_km(ref1(), t, 0.05, 50, Parity::even);
  CHECK(has(s.pairs, 20, 12));
  for (const KmPair& q : s.pairs) {
    CHECK(q.k % 2 == 0);
    CHECK(q.m % 2 == 0);
  }
  const KmPair* p2012 = nullptr;
  for (const KmPair& q : s.pairs)
    if (q.k == 20) p2012 = &q;
  REQUIRE(p2012);
  CHECK(static_cast<double>(p2012->value) == doctest::Approx(0.50682).epsilon(1e-5));
}

TEST_CASE("search_km equals the naive double loop") {
  for (long double t : {std::log(0.5L) / kLn3, 0.0L, 0.3L, -1.7L})
    for (double tol : {0.01, 0.05, 0.2})
      for (bool even : {false, true})
        for (long kmax : {10L, 100L, 1000L}) {
          const KmSearch s = search_km(kTheta, t, tol, kmax, even ? Parity::even : Parity::any, kLn3);
          const auto naive = oracle::naive_km(kTheta, t, static_cast<long double>(tol) / kLn3, kmax, even);
          REQUIRE(s.pairs.size() == naive.size());
          for (std::size_t i = 0; i < naive.size(); ++i) {
            CHECK(s.pairs[i].k == naive[i].first);
            CHECK(s.pairs[i].m == naive[i].second);
          }
        }
}

TEST_CASE("returned pairs satisfy the inequality in 50-digit arithmetic") {
  const CycleParams p = ref1();
  const long double t = std::log(0.5L) / kLn3;
  const double tol = 0.01;
  const KmSearch s = search_km(p, t, tol, 20000, Parity::any);
  REQUIRE(!s.pairs.empty());
  const HP eps = HP(tol) / log(HP(3));
  for (const KmPair& q : s.pairs) CHECK(exact_residual(p.lambda, p.gamma, q.k, q.m, t) < eps);
}

TEST_CASE("stored values match recomputation") {
  const CycleParams p = ref1();
  const KmSearch s = search_km(p, std::log(0.5L) / kLn3, 0.05, 2000, Parity::any);
  for (const KmPair& q : s.pairs) {
    const HP exact = pow(HP(0.5), q.k) * pow(HP(3), q.m);
    const long double rel = static_cast<long double>(abs((HP(q.value) - exact) / exact).convert_to<long double>());
    // one rounding per factor
    CHECK(rel <= static_cast<long double>(q.k + q.m + 2) * std::numeric_limits<long double>::epsilon());
  }
}

TEST_CASE("search_km is monotone in k_max and fast at 1e6") {
  const long double t = std::log(0.5L) / kLn3;
  const KmSearch a = search_km(kTheta, t, 0.02, 500, Parity::any, kLn3);
  const KmSearch b = search_km(kTheta, t, 0.02, 1000, Parity::any, kLn3);
  REQUIRE(b.pairs.size() >= a.pairs.size());
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    CHECK(a.pairs[i].k == b.pairs[i].k);
    CHECK(a.pairs[i].m == b.pairs[i].m);
  }
  const auto t0 = std::chrono::steady_clock::now();
  const KmSearch big = search_km(kTheta, t, 0.02, 1000000, Parity::any, kLn3);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(secs < 1.0);
  CHECK(big.pairs.size() > b.pairs.size());
}

TEST_CASE("search_km edge cases") {
  const KmSearch tight = search_km(kTheta, 0.1L, 1e-9, 10, Parity::any, kLn3);
  CHECK(tight.empty());
  REQUIRE(tight.best);
  CHECK(tight.best_error > 0);
  CHECK(tight.advisory.find("best found") != std::string::npos);

  const KmSearch half = search_km(0.5L, 0.25L, 0.01, 100, Parity::any, kLn3);
  CHECK(half.empty());
  CHECK(half.advisory.find("rational") != std::string::npos);
  const KmSearch lattice = search_km(0.5L, 0.5L, 0.01, 100, Parity::any, kLn3);
  CHECK(!lattice.empty());
  for (const KmPair& q : lattice.pairs) CHECK(q.m * 2 - q.k == 1);

  CHECK_THROWS_AS(search_km(kTheta, 0.0L, 0.0, 10, Parity::any, kLn3), PreconditionError);
  CHECK_THROWS_AS(search_km(kTheta, 0.0L, 0.1, 0, Parity::any, kLn3), PreconditionError);
}

TEST_CASE("P_N") {
  const CycleParams p = ref1();
  const std::vector<KmPair> pn = build_P_N(p, 10, 60);
  CHECK(has(pn, 20, 12));
  CHECK(has(pn, 39, 24));
  for (const KmPair& q : pn) {
    CHECK(q.k > 10);
    CHECK(q.m > 10);
    // independent check of the defining inequality in rationals
    const auto [A, B] = oracle::skeleton(p, q.k, q.m);
    CHECK(abs(B) <= Rational(2, 3) * Rational(1, 2) * Rational(p.delta));
  }
  CHECK_FALSE(has(build_P_N(p, 25, 60), 20, 12));

  CycleParams one = ref1();
  one.u_minus(0) = 1.0;
  CHECK_THROWS_AS(build_P_N(one, 10, 60), PreconditionError);
}

TEST_CASE("REF1 covering set") {
  const CycleParams p = ref1();
  const auto t0 = std::chrono::steady_clock::now();
  const CoveringSet cs = build_covering_set(p);
  const CoverReport r = verify_covering(cs);
  CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() < 1.0);

  REQUIRE(cs.size() == 9);
  for (std::size_t j = 0; j < 9; ++j) CHECK(cs.rho[j] == doctest::Approx(-0.1 + 0.025 * static_cast<double>(j)).epsilon(1e-12));
  CHECK(r.covered);
  CHECK(r.overlap_ok);
  CHECK(r.min_overlap > Rational(25, 10000));

  // independent recomputation of every interval from (k, m) in exact arithmetic
  const Rational dp = Rational(p.q) * Rational(p.delta);
  std::vector<std::pair<Rational, Rational>> iv;
  for (const KmPair& q : cs.pairs) {
    CHECK(q.k > 10);
    CHECK(q.m > 10);
    const auto [A, B] = oracle::skeleton(p, q.k, q.m);
    iv.push_back({B - abs(A) * dp, B + abs(A) * dp});
    CHECK(2 * abs(A) * dp >= Rational(5, 1000));
  }
  const oracle::CoverCheck oc = oracle::check_cover(iv, dp);
  CHECK(oc.covered);
  CHECK(oc.min_overlap > Rational(25, 10000));
  CHECK(oc.min_overlap == r.min_overlap);
}

TEST_CASE("interval counts follow ceil(4/|alpha| + 1)") {
  CycleParams p = ref1();
  p.u_minus(0) = 0.9;
  const CoveringSet cs = build_covering_set(p);
  CHECK(cs.size() == 6);
  CHECK(verify_covering(cs).ok());
}

TEST_CASE("construction never returns a set that fails verification") {
  for (double um : {0.3, 0.45, 0.6, 0.75, 0.9})
    for (double delta : {0.1, 0.2}) {
      CycleParams p = ref1();
      p.u_minus(0) = um;
      p.delta = delta;
      try {
        const CoveringSet cs = build_covering_set(p, Orientation::cs, 10, 20000);
        CHECK(verify_covering(cs).ok());
        CHECK(oracle::check_cover(intervals(cs), cs.delta_prime_exact).covered);
      } catch (const ConvergenceError& e) {
        CHECK(std::string(e.what()).find("rho_j") != std::string::npos);
      }
    }
}

TEST_CASE("mutations: removing intervals agrees with the oracle") {
  const CoveringSet cs = build_covering_set(ref1());
  for (std::size_t j = 0; j < cs.size(); ++j) {
    const CoveringSet mut = remove_interval(cs, j);
    const CoverReport r = verify_covering(mut);
    const oracle::CoverCheck oc = oracle::check_cover(intervals(mut), mut.delta_prime_exact);
    CHECK(r.covered == oc.covered);
  }
  // thinning to every other interval opens gaps
  CoveringSet thin = cs;
  for (std::size_t j = thin.size() - 2; j >= 1 && j < thin.size(); j -= 2) thin = remove_interval(thin, j);
  const CoverReport rt = verify_covering(thin);
  CHECK(rt.covered == oracle::check_cover(intervals(thin), thin.delta_prime_exact).covered);
}

TEST_CASE("gap location and the single-interval case") {
  const Rational dp(1, 100);
  const CoveringSet three = synthetic({{Rational(-12, 1000), Rational(-3, 1000)},
                                       {Rational(-4, 1000), Rational(4, 1000)},
                                       {Rational(3, 1000), Rational(12, 1000)}},
                                      dp, 0.5);
  CHECK(verify_covering(three).covered);
  const CoverReport gap = verify_covering(remove_interval(three, 1));
  CHECK_FALSE(gap.covered);
  CHECK(gap.gap_start == Rational(-3, 1000));
  CHECK(gap.max_gap == Rational(6, 1000));

  const CoveringSet one = synthetic({{Rational(-2, 100), Rational(2, 100)}}, dp, 0.5);
  const CoverReport r1 = verify_covering(one);
  CHECK(r1.covered);
  CHECK_FALSE(r1.overlap_applicable);
  CHECK(r1.ok());

  // covered but with a thin overlap
  const CoveringSet thin = synthetic({{Rational(-2, 100), Rational(1, 1000)}, {Rational(0), Rational(2, 100)}}, dp, 0.5);
  const CoverReport rt = verify_covering(thin);
  CHECK(rt.covered);
  CHECK_FALSE(rt.overlap_ok);
  CHECK(rt.min_overlap == Rational(1, 1000));
}

TEST_CASE("cu covering for alpha = 2.5") {
  CycleParams p = ref1();
  p.u_minus(0) = 2.5;
  const CoveringSet cs = build_covering_set(p, Orientation::cu);
  CHECK(cs.size() == static_cast<std::size_t>(std::ceil(4.0 / 0.4 + 1.0)));
  CHECK(verify_covering(cs).ok());
  CHECK_THROWS_AS(build_covering_set(p, Orientation::cs), PreconditionError);
}

TEST_CASE("covering preconditions") {
  CHECK_THROWS_WITH_AS(build_covering_set(ref2()), doctest::Contains("rational"), PreconditionError);
  CycleParams p = ref1();
  p.mu = 1e-3;
  CHECK_THROWS_AS(build_covering_set(p), PreconditionError);
  CycleParams small = ref1();
  small.delta = 0.02;
  CHECK_THROWS_WITH_AS(build_covering_set(small), doctest::Contains("double range"), ConvergenceError);
}

TEST_CASE("exact decimal strings") {
  CHECK(exact_decimal(Rational(1, 8)) == "0.125");
  CHECK(exact_decimal(Rational(-3, 4)) == "-0.75");
  CHECK(exact_decimal(Rational(5)) == "5");
  const CoveringSet cs = build_covering_set(ref1());
  const std::string s = exact_decimal(cs.lo[0]);
  REQUIRE(s.rfind("-0.", 0) == 0);
  const std::string digits = s.substr(3);
  // leading zeros would make the BigInt parser read octal
  const Rational back = -Rational(BigInt(digits.substr(digits.find_first_not_of('0'))), boost::multiprecision::pow(BigInt(10), static_cast<unsigned>(digits.size())));
  CHECK(back == cs.lo[0]);
}

TEST_CASE("simultaneous search") {
  const long double w = std::sqrt(2.0L) - 1;
  const SimSearch s = search_simultaneous({{1, -kTheta, -0.6309L, 0.02, 1}, {-1, w, 0.25L, 0.02}}, 100000);
  REQUIRE(!s.empty());
  for (const SimTuple& t : s.tuples) {
    CHECK(std::fabs(static_cast<double>(t.n[0] - t.k * kTheta + 0.6309L)) < 0.02);
    CHECK(std::fabs(static_cast<double>(t.k * w - t.n[1] - 0.25L)) < 0.02);
  }
  const SimSearch loose = search_simultaneous({{1, -kTheta, 0.3L, 0.5}, {-1, w, 0.4L, 0.5}}, 10);
  REQUIRE(!loose.empty());
  CHECK(loose.tuples.front().k == 1);

  const SimSearch lat = search_simultaneous({{1, -kTheta, -0.6309L, 0.02, 1}, {-1, 0.25L, 0.1L, 0.02}}, 100000);
  CHECK(lat.empty());
  CHECK(!lat.advisories.empty());
  CHECK(lat.advisories.front().find("rational") != std::string::npos);
  CHECK_THROWS_AS(search_simultaneous({{1, -kTheta, 0.0L, 0.1}}, 10), PreconditionError);
}
