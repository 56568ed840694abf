#include "blab/blender_verifier.hpp"
#include "blab/presets.hpp"
#include "blab/return_map.hpp"

#include <doctest.h>

#include <random>
#include <sstream>

using namespace blab;

namespace {

Disc affine_disc(const CycleParams& p, double x0, double slope) {
  Eigen::VectorXd c(2);
  c << x0, 0;
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(2, 1);
  G(0, 0) = slope;
  return Disc::affine(p, Orientation::cs, c, G);
}

// Every transition coefficient and heteroclinic coordinate moved by U(-eps, eps).
CycleParams perturbed(CycleParams p, double eps, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> U(-eps, eps);
  auto shake = [&](auto& M) {
    for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] += U(g);
  };
  shake(p.a);
  shake(p.b);
  for (Eigen::MatrixXd* M : {&p.a12, &p.a13, &p.a21, &p.a22, &p.a23, &p.a31, &p.a32, &p.a33, &p.b12, &p.b13, &p.b21,
                             &p.b22, &p.b23, &p.b31, &p.b32, &p.b33})
    shake(*M);
  for (Eigen::VectorXd* v : {&p.x_plus, &p.z_plus, &p.y_minus, &p.v_plus, &p.u_minus, &p.w_minus}) shake(*v);
  p.validate();
  return p;
}

std::vector<KmPair> repeat(long k, long m, int n) { return std::vector<KmPair>(static_cast<std::size_t>(n), make_pair_km(k, m, 0)); }

}  // namespace

TEST_CASE("proper crossing examples") {
  const CycleParams p = ref1();
  const CoveringSet cs = build_covering_set(p);
  const BlenderContext ctx(p, cs);
  const CrossingCube cube = ctx.cube();
  const ConeSpec cone = ctx.cone();
  CHECK(cube.x_half == doctest::Approx(0.01));
  CHECK(cone.K == doctest::Approx(0.1 * 0.5 / 4));

  const ProperReport flat = is_proper_crossing(affine_disc(p, 0.005, 0), cube, cone);
  CHECK(flat.proper);
  CHECK(flat.margin == cone.K);

  const ProperReport steep = is_proper_crossing(affine_disc(p, 0.02, 0.5), cube, cone);
  CHECK_FALSE(steep.proper);

  const ProperReport out = is_proper_crossing(affine_disc(p, 0.011, 0), cube, cone);
  CHECK_FALSE(out.proper);
  CHECK(out.reason.find("leaves") != std::string::npos);

  const ProperReport tilt = is_proper_crossing(affine_disc(p, 0, 0.02), cube, cone);
  CHECK_FALSE(tilt.proper);
  CHECK(tilt.reason.find("cone") != std::string::npos);
  CHECK(tilt.margin < 0);

  detail::Rng rng(7);
  for (int i = 0; i < 200; ++i) CHECK(is_proper_crossing(random_proper_disc(p, Orientation::cs, cs.alpha_eff, rng), cube, cone).proper);
}

TEST_CASE("preimage of a constant disc matches the affine inversion") {
  const CycleParams p = ref1();
  const CoveringSet cs = build_covering_set(p);
  const BlenderContext ctx(p, cs);
  const Disc S = affine_disc(p, 0.005, 0);

  std::size_t j2012 = cs.size();
  for (std::size_t j = 0; j < cs.size(); ++j)
    if (cs.pairs[j].k == 20 && cs.pairs[j].m == 12) j2012 = j;
  REQUIRE(j2012 < cs.size());
  const PreimageResult forced = preimage_step(S, ctx, j2012);
  const double X = forced.disc.values[static_cast<std::size_t>(S.center_index())](0);
  const double affine = (0.005 - 7153.0 / 1048576.0) / (531441.0 / 1048576.0);
  CHECK(affine == doctest::Approx(-0.0035942).epsilon(1e-4));
  CHECK(std::fabs(X - affine) < 1e-12);
  CHECK(std::fabs(X) <= 0.01);

  // automatic selection maximizes the containment margin
  const PreimageResult best = preimage_step(S, ctx);
  double margin = 0;
  for (std::size_t j = 0; j < cs.size(); ++j) {
    const double lo = cs.lo[j].convert_to<double>(), hi = cs.hi[j].convert_to<double>();
    margin = std::max(margin, std::min(0.005 - lo, hi - 0.005));
  }
  CHECK(best.margin == doctest::Approx(margin).epsilon(1e-12));
  CHECK(best.margin >= cs.delta_prime * cs.alpha_eff / 8);

  // an interval containing 0 sends s_X = 0 to -B/A
  const Disc zero = affine_disc(p, 0, 0);
  for (std::size_t j = 0; j < cs.size(); ++j) {
    if (!(cs.lo[j] < 0 && cs.hi[j] > 0)) continue;
    const PreimageResult r = preimage_step(zero, ctx, j);
    const double root = Rational(-cs.B[j] / cs.A[j]).convert_to<double>();
    CHECK(std::fabs(r.disc.values[static_cast<std::size_t>(zero.center_index())](0) - root) < 1e-12);
  }
}

TEST_CASE("a thinned covering reports the margin failure") {
  const CycleParams p = ref1();
  CoveringSet cs = build_covering_set(p);
  // drop every interval that reaches 0.005
  for (std::size_t j = cs.size(); j-- > 0;)
    if (cs.hi[j] > Rational(4, 1000) && cs.lo[j] < Rational(6, 1000)) cs = remove_interval(cs, j);
  const BlenderContext ctx(p, cs);
  try {
    preimage_step(affine_disc(p, 0.005, 0), ctx);
    FAIL("expected a covering-margin error");
  } catch (const BlenderStepError& e) {
    CHECK(e.kind() == BlenderStepError::covering_margin);
    CHECK(std::string(e.what()).find("margin") != std::string::npos);
  }
}

TEST_CASE("REF1 certificate") {
  const CycleParams p = ref1();
  const CoveringSet cs = build_covering_set(p);
  const double tol = 1e-10;
  const BlenderCertificate c = verify_blender(p, cs, Orientation::cs, 12, 30, tol, 3);
  CHECK(c.pass);
  CHECK(c.passed == 12);
  for (const TrialRecord& r : c.records) {
    REQUIRE(r.log10_diameters.size() == 31);
    for (std::size_t i = 1; i < r.log10_diameters.size(); ++i) CHECK(r.log10_diameters[i] <= r.log10_diameters[i - 1] - 2.0);
    CHECK(r.log10_diameters.back() < std::log10(tol));
    CHECK(r.witness_offset <= tol);
    CHECK(r.membership.member);
    CHECK(r.membership.depth_verified == 30);
    // independent re-check of the witness with the public membership entry point
    CHECK(wu_membership(r.witness, r.pairs, p, 30).member);
    for (const KmPair& q : r.pairs) {
      bool found = false;
      for (const KmPair& c2 : cs.pairs) found = found || (c2.k == q.k && c2.m == q.m);
      CHECK(found);
    }
  }
}

TEST_CASE("depth 0 records the disc and fails") {
  const CycleParams p = ref1();
  const BlenderCertificate c = verify_blender(p, build_covering_set(p), Orientation::cs, 2, 0, 1e-10);
  CHECK_FALSE(c.pass);
  CHECK(c.note == "no refinement");
  REQUIRE(c.records.size() == 2);
  CHECK(c.records[0].log10_diameters.size() == 1);
}

TEST_CASE("membership") {
  const CycleParams p = ref1();
  const FixedPoint fp = fixed_point(p, 20, 12);
  for (int depth : {1, 5, 25}) CHECK(orbit_membership(fp.point, repeat(20, 12, 25), p, depth).member);

  Eigen::VectorXd shifted = fp.point;
  shifted(0) += 2 * p.delta;
  const MembershipReport r = orbit_membership(shifted, repeat(20, 12, 5), p, 5);
  CHECK_FALSE(r.member);
  CHECK(r.failed_step == 1);

  CHECK_THROWS_AS(orbit_membership(fp.point, repeat(20, 12, 2), p, 3), PreconditionError);
}

TEST_CASE("fixed seed gives a bit-identical certificate") {
  const CycleParams p = ref1();
  const CoveringSet cs = build_covering_set(p);
  const BlenderCertificate a = verify_blender(p, cs, Orientation::cs, 3, 10, 1e-10, 42);
  const BlenderCertificate b = verify_blender(p, cs, Orientation::cs, 3, 10, 1e-10, 42);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t t = 0; t < a.records.size(); ++t) {
    CHECK(a.records[t].seed_center == b.records[t].seed_center);
    CHECK(a.records[t].log10_diameters == b.records[t].log10_diameters);
    CHECK(a.records[t].witness == b.records[t].witness);
  }
  CHECK(diameter_trace_csv(a) == diameter_trace_csv(b));
  const BlenderCertificate other = verify_blender(p, cs, Orientation::cs, 3, 10, 1e-10, 43);
  CHECK_FALSE(other.records[0].seed_center == a.records[0].seed_center);
}

TEST_CASE("coefficient noise with the same covering set") {
  const CycleParams p = ref1();
  const CoveringSet cs = build_covering_set(p);
  const CycleParams noisy = perturbed(p, 1e-3, 11);
  CHECK(noisy.a12(0, 0) != p.a12(0, 0));
  const BlenderCertificate c = verify_blender(noisy, cs, Orientation::cs, 8, 30, 1e-10, 5);
  CHECK(c.pass);
}

TEST_CASE("cu orientation at alpha = 2.5") {
  CycleParams p = ref1();
  p.u_minus(0) = 2.5;
  const CoveringSet cs = build_covering_set(p, Orientation::cu);
  const BlenderCertificate c = verify_blender(p, cs, Orientation::cu, 8, 20, 1e-10, 1);
  CHECK(c.pass);
  for (const TrialRecord& r : c.records) CHECK(orbit_membership(r.witness, r.pairs, p, 20, Orientation::cu).member);
  CHECK_THROWS_AS(verify_blender(p, cs, Orientation::cs, 1, 1, 1e-10), PreconditionError);
}

// Tails against delta: moderate tails still verify at delta = 0.1, strong ones break the root
// bracketing, and delta = 0.02 is out of reach because the covering pairs overflow double range.
TEST_CASE("tail strength against delta") {
  CycleParams p = ref1();
  p.tails.c_g = 0.05;
  p.tails.c_t = 0.05;
  CHECK(verify_blender(p, build_covering_set(p), Orientation::cs, 4, 15, 1e-10, 2).pass);

  p.tails.c_g = 0;
  p.tails.c_t = 20;
  const BlenderCertificate strong = verify_blender(p, build_covering_set(p), Orientation::cs, 4, 15, 1e-10, 2);
  CHECK_FALSE(strong.pass);
  bool bracketing = false;
  for (const TrialRecord& r : strong.records) bracketing = bracketing || r.failure.rfind("bracketing", 0) == 0;
  CHECK(bracketing);

  p.delta = 0.02;
  CHECK_THROWS_AS(build_covering_set(p), ConvergenceError);
}

TEST_CASE("diameter trace csv") {
  const CycleParams p = ref1();
  const BlenderCertificate c = verify_blender(p, build_covering_set(p), Orientation::cs, 2, 4, 1e-3, 9);
  const std::string csv = diameter_trace_csv(c);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "trial,step,k,m,log10_diameter");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 2 * 5);
}
