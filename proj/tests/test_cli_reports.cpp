#include "blab/presets.hpp"
#include "blab/report.hpp"

#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace blab;
namespace fs = std::filesystem;

namespace {

template <class M>
bool same_bits(const M& a, const M& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool identical(const CycleParams& x, const CycleParams& y) {
  bool ok = x.kind == y.kind && x.d == y.d && x.d1 == y.d1;
  for (auto [a, b] : {std::pair{x.lambda, y.lambda}, {x.gamma, y.gamma}, {x.omega, y.omega}, {x.omega1, y.omega1},
                      {x.omega2, y.omega2}, {x.mu, y.mu}, {x.delta, y.delta}, {x.q, y.q}, {x.tails.c_g, y.tails.c_g},
                      {x.tails.c_t, y.tails.c_t}, {x.chart_radius, y.chart_radius}})
    ok = ok && same_bits(a, b);
  const Eigen::MatrixXd CycleParams::*mats[] = {&CycleParams::P1,  &CycleParams::P2,  &CycleParams::Q1,  &CycleParams::Q2,
                                                &CycleParams::a12, &CycleParams::a13, &CycleParams::a21, &CycleParams::a22,
                                                &CycleParams::a23, &CycleParams::a31, &CycleParams::a32, &CycleParams::a33,
                                                &CycleParams::b12, &CycleParams::b13, &CycleParams::b21, &CycleParams::b22,
                                                &CycleParams::b23, &CycleParams::b31, &CycleParams::b32, &CycleParams::b33};
  for (auto m : mats) ok = ok && same_bits(x.*m, y.*m);
  const Eigen::VectorXd CycleParams::*vecs[] = {&CycleParams::b,       &CycleParams::x_plus,  &CycleParams::z_plus,
                                                &CycleParams::y_minus, &CycleParams::v_plus,  &CycleParams::u_minus,
                                                &CycleParams::w_minus};
  for (auto v : vecs) ok = ok && same_bits(x.*v, y.*v);
  return ok && same_bits(x.a, y.a);
}

CycleParams round_trip(const CycleParams& p) { return params_from_json(parse_json_text(dump_json(params_to_json(p)), "memory")); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("blab_test_" + name);
  fs::remove_all(d);
  return d;
}

Scenario small_scenario(const std::string& preset, std::vector<std::string> actions, const fs::path& out) {
  Scenario s;
  REQUIRE(find_preset(preset, s.params));
  s.source = preset;
  s.actions = std::move(actions);
  s.out_dir = out.string();
  s.options.trials = 3;
  s.options.depth = 8;
  s.options.mu_samples = 101;
  return s;
}

}  // namespace

TEST_CASE("params round trip is bit-exact") {
  for (const std::string& name : preset_names()) {
    CycleParams p;
    REQUIRE(find_preset(name, p));
    CHECK(identical(round_trip(p), p));
  }
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> U(-1, 1);
  for (int i = 0; i < 100; ++i) {
    CycleParams p = ref1();
    auto shake = [&](auto& M) {
      for (Eigen::Index j = 0; j < M.size(); ++j) M.data()[j] += U(g) * 1e-3;
    };
    shake(p.a12);
    shake(p.b33);
    shake(p.x_plus);
    shake(p.b);
    p.mu = U(g) * 1e-7;
    p.tails.c_t = std::fabs(U(g));
    p.q = 0.1 + 1e-17 * i;
    CHECK(identical(round_trip(p), p));
  }
}

TEST_CASE("number formatting") {
  CHECK(format_number(0.1) == "0.10000000000000001");
  CHECK(format_number(2.0) == "2");
  CHECK(format_number(-0x1p-1000) == "-9.3326361850321888e-302");
  CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("preset files match the built-in presets") {
  for (const std::string& name : preset_names()) {
    const fs::path file = fs::path(BLAB_SOURCE_DIR) / "presets" / (name + ".json");
    REQUIRE(fs::exists(file));
    CycleParams builtin;
    REQUIRE(find_preset(name, builtin));
    const Scenario s = scenario_from_json(read_json_file(file.string()), file.string());
    CAPTURE(name);
    CHECK(identical(s.params, builtin));
  }
}

TEST_CASE("configuration errors") {
  const fs::path missing = fs::path(BLAB_SOURCE_DIR) / "tests" / "data" / "missing_gamma.json";
  CHECK_THROWS_WITH_AS(load_scenario(missing.string()), doctest::Contains("gamma"), InputError);
  CHECK_THROWS_WITH_AS(parse_json_text("{\n  \"a\": 1,\n  \"b\": ]\n}", "cfg"), doctest::Contains("cfg:3"), InputError);
  CHECK_THROWS_AS(load_scenario("no-such-preset-or-file"), InputError);

  Scenario s = small_scenario("ref1-type1", {}, scratch_dir("empty"));
  const ScenarioResult r = run_scenario(s);
  CHECK(r.exit_code == 1);
  CHECK(r.message == "no actions requested");

  s.actions = {"frobnicate"};
  CHECK(run_scenario(s).exit_code == 1);

  Scenario rational = small_scenario("ref2-rational", {"covering"}, scratch_dir("rational"));
  const ScenarioResult rr = run_scenario(rational);
  CHECK(rr.exit_code == 1);
  CHECK(rr.message.find("covering") != std::string::npos);
}

TEST_CASE("two actions give two reports and an index") {
  const fs::path out = scratch_dir("two");
  const ScenarioResult r = run_scenario(small_scenario("ref1-type1", {"classify", "covering"}, out));
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(out / "regime.json"));
  CHECK(fs::exists(out / "covering.json"));
  CHECK(fs::exists(out / "covering.csv"));
  REQUIRE(fs::exists(out / "index.json"));
  const json index = json::parse(slurp(out / "index.json"));
  REQUIRE(index["actions"].size() == 2);
  CHECK(index["actions"][0]["file"] == "regime.json");
  CHECK(index["actions"][1]["certified"] == true);
  CHECK(index["seed"] == 0);
  const json regime = json::parse(slurp(out / "regime.json"));
  CHECK(regime["type"] == "I");
  CHECK(regime["seed"] == 0);
}

TEST_CASE("identical scenarios give byte-identical files") {
  const fs::path a = scratch_dir("det_a"), b = scratch_dir("det_b");
  REQUIRE(run_scenario(small_scenario("ref1-type1", {"report-all"}, a)).exit_code == 0);
  REQUIRE(run_scenario(small_scenario("ref1-type1", {"report-all"}, b)).exit_code == 0);
  int files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    const fs::path other = b / e.path().filename();
    REQUIRE(fs::exists(other));
    CAPTURE(e.path().filename().string());
    CHECK(slurp(e.path()) == slurp(other));
    ++files;
  }
  CHECK(files >= 8);
  for (const char* f : {"regime.json", "covering.json", "blender_certificate.json", "sweep.csv"}) CHECK(fs::exists(a / f));
  const std::string sweep = slurp(a / "sweep.csv");
  CHECK(sweep.rfind("mu,hit_family,index,rescaled_value,label\n", 0) == 0);
}

TEST_CASE("rational preset reports trivial dynamics") {
  const fs::path out = scratch_dir("ref2");
  const ScenarioResult r = run_scenario(small_scenario("ref2-rational", {"report-all"}, out));
  CHECK(r.exit_code == 0);
  const json regime = json::parse(slurp(out / "regime.json"));
  CHECK(regime["rare1"]["holds"] == false);
  CHECK(regime["rare1"]["s"] == 0);
  CHECK(regime["label"] == "hyperbolic-trivial");
  CHECK_FALSE(fs::exists(out / "blender_certificate.json"));
}

TEST_CASE("failed certification gives exit 2") {
  Scenario s = small_scenario("ref1-type1", {"verify-blender"}, scratch_dir("fail"));
  s.options.depth = 0;
  const ScenarioResult r = run_scenario(s);
  CHECK(r.exit_code == 2);
  CHECK(r.message == "certification failed");
}
