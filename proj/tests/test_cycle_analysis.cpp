#include "blab/cycle_analysis.hpp"
#include "blab/presets.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace blab;

TEST_CASE("moduli and types") {
  const Moduli m = compute_moduli(ref1());
  CHECK(m.theta == doctest::Approx(0.6309298).epsilon(1e-7));
  CHECK(m.theta == static_cast<double>(std::log(2.0L) / std::log(3.0L)));
  CHECK(m.alpha == 0.5);
  CHECK(m.type == CycleType::I);
  CHECK(compute_moduli(ref1_type2()).type == CycleType::II);

  CycleParams neg = ref1();
  neg.lambda = -0.5;
  CHECK(compute_moduli(neg).type == CycleType::III);
  CycleParams negg = ref1();
  negg.gamma = -3.0;
  CHECK(compute_moduli(negg).type == CycleType::III);

  CHECK(std::string(cycle_type_name(compute_moduli(ref_sf()).type)) == "n/a");

  CycleParams deg = ref1();
  deg.u_minus(0) = 1.0;  // alpha = 1
  CHECK_THROWS_AS(compute_moduli(deg), PreconditionError);
}

TEST_CASE("alpha is invariant under rescaling of u and x") {
  std::mt19937_64 g(4);
  std::uniform_int_distribution<int> E(-20, 20);
  for (const CycleParams& base : {ref1(), ref1_type2(), ref2()}) {
    const double a0 = compute_moduli(base).alpha;
    for (int i = 0; i < 50; ++i) {
      const double cu = std::ldexp(1.0, E(g)), cx = std::ldexp(1.0, E(g));
      CycleParams p = base;
      p.b(0) *= cx / cu;
      p.x_plus(0) *= cx;
      p.u_minus(0) *= cu;
      CHECK(compute_moduli(p).alpha == a0);
    }
  }
}

TEST_CASE("type under moving the heteroclinic points along the orbit") {
  auto sign = [](const CycleParams& p) { return p.a(0) * p.x_plus(0) * p.u_minus(0) > 0; };
  for (const CycleParams& base : {ref1(), ref1_type2()}) {
    CycleParams p = base;
    const CycleType t0 = compute_moduli(p).type;
    for (int step = 0; step < 4; ++step) {
      p.x_plus(0) *= p.lambda;
      p.u_minus(0) *= p.gamma;
      p.b(0) *= p.lambda / p.gamma;  // keeps alpha fixed
      CHECK(compute_moduli(p).type == t0);
    }
  }
  CycleParams p = ref1();
  p.lambda = -0.5;
  bool s = sign(p);
  for (int step = 0; step < 4; ++step) {
    p.x_plus(0) *= p.lambda;
    p.b(0) *= p.lambda;  // keeps alpha fixed
    CHECK(sign(p) != s);
    s = sign(p);
    CHECK(compute_moduli(p).type == CycleType::III);
  }
}

TEST_CASE("rational theta conditions") {
  const RareReport r2 = rational_theta_check(ref2());
  CHECK(r2.rational);
  CHECK(r2.fraction.p == 1);
  CHECK(r2.fraction.q == 2);
  CHECK(r2.rare1.applicable);
  CHECK_FALSE(r2.rare1.holds);
  CHECK(r2.rare1.s == 0);
  CHECK(r2.rare1.distance == 0.0);

  CycleParams ab = ref2();
  ab.a(0) = 1.3;
  const RareReport r13 = rational_theta_check(ab);
  CHECK(r13.rare1.holds);
  CHECK(r13.rare1.distance == doctest::Approx(0.3).epsilon(1e-12));
  // the finite s-scan, independently: |gamma|^(s/2) = 2^s
  double best = 1e9;
  for (int s = -5; s <= 5; ++s) best = std::min(best, std::fabs(std::ldexp(1.0, s) - 1.3));
  CHECK(r13.rare1.distance == doctest::Approx(best).epsilon(1e-12));

  const RareReport r1 = rational_theta_check(ref1(), 20);
  CHECK_FALSE(r1.rational);
  CHECK_FALSE(r1.rare1.applicable);
  CHECK_FALSE(r1.rare2.applicable);
  CHECK(r1.fraction.p == 12);
  CHECK(r1.fraction.q == 19);
  // best approximant with q <= 20 by brute force
  const long double th = std::log(2.0L) / std::log(3.0L);
  long double err = 1;
  long bp = 0, bq = 1;
  for (long q = 1; q <= 20; ++q) {
    const long p = std::lround(th * q);
    const long double e = std::fabs(th - static_cast<long double>(p) / q);
    if (e < err - 1e-15L) {
      err = e;
      bp = p;
      bq = q;
    }
  }
  CHECK(bp == 12);
  CHECK(bq == 19);
  CHECK(static_cast<double>(err) == doctest::Approx(6.492e-4).epsilon(1e-3));
}

TEST_CASE("activation interval endpoints") {
  const CycleParams p = ref1();
  const ActivationInterval u5 = interval_u(p, 5);
  CHECK(std::fabs(u5.lo - (0.5 / 243 - 0.5 / 243 * 0.01)) < 1e-12);
  CHECK(std::fabs(u5.hi - (0.5 / 243 + 0.5 / 243 * 0.01)) < 1e-12);
  CHECK(u5.lo == doctest::Approx(2.0370e-3).epsilon(1e-4));
  CHECK(u5.hi == doctest::Approx(2.0782e-3).epsilon(1e-4));

  const ActivationInterval s5 = interval_s(p, 5);
  CHECK(s5.center == -0.03125);
  CHECK(s5.half_width == doctest::Approx(1.5625e-4).epsilon(1e-12));
  CHECK(std::fabs(s5.lo - (-0.03125 - 1.5625e-4)) < 1e-12);
  CHECK(std::fabs(s5.hi - (-0.03125 + 1.5625e-4)) < 1e-12);
  CHECK(s5.inner_lo == doctest::Approx(s5.lo + 0.1 * s5.half_width));
}

TEST_CASE("interval families are disjoint and avoid mu = 0") {
  const ActivationSet iv = activation_intervals(ref1(), 1, 60);
  for (const auto* fam : {&iv.u, &iv.s}) {
    std::vector<ActivationInterval> v = *fam;
    std::sort(v.begin(), v.end(), [](const auto& x, const auto& y) { return x.lo < y.lo; });
    for (std::size_t i = 0; i + 1 < v.size(); ++i) CHECK(v[i].hi < v[i + 1].lo);
    for (const auto& a : v) {
      CHECK_FALSE(a.contains_mu);
      CHECK_FALSE((a.lo <= 0 && a.hi >= 0));
    }
  }
}

TEST_CASE("sweep labels") {
  const CycleParams p = ref1();
  const SweepTable hu = sweep_mu(p, 2.05e-3, 2.05e-3, 1);
  REQUIRE(hu.rows.size() == 1);
  CHECK(hu.rows[0].hit_family == "u");
  CHECK(hu.rows[0].index == 5);
  CHECK(hu.rows[0].label == "O1-related");
  CHECK(hu.rows[0].rescaled == doctest::Approx(2.05e-3 * 243));

  const SweepTable hs = sweep_mu(p, -0.03125, -0.03125, 1);
  CHECK(hs.rows[0].hit_family == "s");
  CHECK(hs.rows[0].index == 5);
  CHECK(hs.rows[0].label == "O2-related");

  const SweepTable neg = sweep_mu(p, -0.02, -1e-6, 400);
  CHECK(neg.full_semantics);
  for (const SweepRow& r : neg.rows)
    if (r.hit_family == "none") CHECK(r.label == "L1-escapes");
  const SweepTable pos = sweep_mu(p, 1e-6, 0.02, 400);
  for (const SweepRow& r : pos.rows)
    if (r.hit_family == "none") CHECK(r.label == "hyperbolic-trivial");
}

TEST_CASE("sweep labels do not depend on sample order") {
  const CycleParams p = ref1();
  const SweepTable all = sweep_mu(p, -0.04, 0.04, 301);
  std::vector<std::size_t> order(all.rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), std::mt19937_64(8));
  for (std::size_t i : order) {
    const SweepRow& r = all.rows[i];
    const SweepTable one = sweep_mu(p, r.mu, r.mu, 1);
    CHECK(one.rows[0].label == r.label);
    CHECK(one.rows[0].hit_family == r.hit_family);
  }
}

TEST_CASE("secondary-cycle mu") {
  const CycleParams p = ref1_type2();
  const auto v = secondary_cycle_mu(p, {{20, 12}, {39, 24}});
  REQUIRE(v.size() == 2);
  CHECK(v[0].mu_lambda == doctest::Approx(std::ldexp(1.0, -20)).epsilon(1e-14));
  CHECK(v[0].mu_gamma == doctest::Approx(0.5 / 531441.0).epsilon(1e-14));
  CHECK(v[0].mu_gamma == doctest::Approx(9.40838e-7).epsilon(1e-5));
  CHECK(v[0].relative_discrepancy == doctest::Approx(0.0135).epsilon(0.01));
  CHECK(v[0].relative_discrepancy < 0.02);
  CHECK(v[1].discrepancy < v[0].discrepancy);
  CHECK_THROWS_AS(secondary_cycle_mu(p, {{20, 13}}), PreconditionError);
  CHECK_THROWS_AS(secondary_cycle_mu(ref1(), {{20, 12}}), PreconditionError);
}

TEST_CASE("theta prime") {
  const CycleParams p = ref1_type2();
  const ThetaPrime t = theta_prime_estimate(p, 10);
  CHECK(t.leading == doctest::Approx(0.06309298).epsilon(1e-7));
  CHECK(t.direct == doctest::Approx(std::log(2.0) / std::log(0.5 * 59049)).epsilon(1e-12));
  const ThetaPrime t1 = theta_prime_estimate(p, 1);
  CHECK(std::fabs(t1.gamma_prime) == doctest::Approx(1.5));
  CHECK(t1.direct == doctest::Approx(std::log(2.0) / std::log(1.5)).epsilon(1e-12));
  CHECK_THROWS_AS(theta_prime_estimate(p, 0), PreconditionError);
  CycleParams small = p;
  small.u_minus(0) = -0.2;  // |alpha| gamma = 0.6
  CHECK_THROWS_AS(theta_prime_estimate(small, 1), PreconditionError);
}

TEST_CASE("saddle-focus sequence re-verified by direct evaluation") {
  const CycleParams p = ref_sf();
  const ReturnCoeffs rc = return_coeffs(p, 1, 1);
  CHECK(rc.eta1 == doctest::Approx(1.10715).epsilon(1e-5));
  CHECK(rc.eta2 == doctest::Approx(1.37340).epsilon(1e-5));
  const FocusSequence fs = focus_sequences(p, 10000);
  CHECK(fs.index_name == "k");
  REQUIRE(!fs.indices.empty());
  CHECK(fs.threshold == doctest::Approx(0.005));
  const double w = p.omega;
  std::size_t next = 0;
  for (long k = 1; k <= 10000; ++k) {
    const oracle::HP ph = oracle::HP(k) * oracle::HP(w);
    const double s1 = static_cast<double>(sin(ph + oracle::HP(rc.eta1))), s2 = static_cast<double>(sin(ph + oracle::HP(rc.eta2)));
    const double lhs = std::fabs(rc.B * s2), rhs = fs.threshold * std::fabs(rc.A * s1);
    const bool listed = next < fs.indices.size() && fs.indices[next] == k;
    if (listed) ++next;
    if (std::fabs(lhs - rhs) > 1e-12) CHECK(listed == (lhs < rhs));
  }
  CHECK(next == fs.indices.size());
}

TEST_CASE("double-focus sequence") {
  CycleParams p = ref_df();
  const FocusSequence fs = focus_sequences(p, 10000);
  CHECK(fs.index_name == "m");
  REQUIRE(!fs.indices.empty());
  const ReturnCoeffs rc = return_coeffs(p, 1, 1);
  const double target = -p.u_minus(0) / p.u_minus(1);
  for (long m : fs.indices) {
    const double t = static_cast<double>(tan(oracle::HP(m) * oracle::HP(p.omega2) + oracle::HP(rc.eta3)));
    CHECK(std::fabs(t - target) < fs.threshold + 1e-9);
  }

  p.u_minus(1) = 0.0;
  const FocusSequence rec = focus_sequences(p, 2000);
  CHECK(rec.reciprocal);
  CHECK(std::any_of(rec.advisories.begin(), rec.advisories.end(), [](const std::string& a) { return a.find("cot") != std::string::npos; }));
  for (long m : rec.indices) {
    const oracle::HP ph = oracle::HP(m) * oracle::HP(p.omega2) + oracle::HP(rc.eta3);
    CHECK(static_cast<double>(abs(cos(ph) / sin(ph))) < fs.threshold + 1e-9);
  }

  CHECK_THROWS_AS(focus_sequences(ref1(), 10), PreconditionError);
}

TEST_CASE("rational rotation gives an advisory") {
  CycleParams p = ref_sf();
  p.omega = M_PI;
  const FocusSequence fs = focus_sequences(p, 1000);
  CHECK(std::any_of(fs.advisories.begin(), fs.advisories.end(), [](const std::string& a) { return a.find("rational") != std::string::npos; }));
}

TEST_CASE("classification labels") {
  CHECK(classify(ref1()).label == "robust-heterodimensional-candidate");
  CycleParams hit = ref1();
  hit.mu = 2.05e-3;
  const RegimeReport rh = classify(hit);
  CHECK(rh.label == "O1-related");
  REQUIRE(rh.hits.size() == 1);
  CHECK(rh.hits[0].index == 5);

  const RegimeReport r2 = classify(ref2());
  CHECK(r2.label == "hyperbolic-trivial");
  CHECK(r2.prediction_conditional);

  CycleParams escape = ref1();
  escape.mu = -1e-3;
  CHECK(classify(escape).label == "hyperbolic-trivial");

  CycleParams t2 = ref1_type2();
  t2.mu = 1e-4;
  CHECK(classify(t2).label == "robust-heterodimensional-candidate");
  CHECK_FALSE(classify(t2).notes.empty());

  const RegimeReport sf = classify(ref_sf());
  CHECK_FALSE(sf.rare_evaluated);
  CHECK_FALSE(sf.notes.empty());
}
