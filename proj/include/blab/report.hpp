#pragma once

#include "blab/blender_verifier.hpp"
#include "blab/covering_engine.hpp"
#include "blab/cycle_analysis.hpp"
#include "blab/params_json.hpp"
#include "blab/presets.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace blab {

// ---------------------------------------------------------------------------------------------
// Deterministic output: sorted keys, 17 significant digits, no locale.

inline std::string format_number(double v) {
  if (!std::isfinite(v)) return "null";
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, 17);
  return std::string(buf.data(), res.ptr);
}

namespace detail {

inline void dump_string(const std::string& s, std::string& out) {
  out += json(s).dump();
}

inline void dump_value(const json& j, int indent, std::string& out) {
  const std::string pad(static_cast<std::size_t>(indent + 2), ' '), close(static_cast<std::size_t>(indent), ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {  // nlohmann::json keeps keys sorted
        if (!first) out += ",\n";
        first = false;
        out += pad;
        dump_string(it.key(), out);
        out += ": ";
        dump_value(it.value(), indent + 2, out);
      }
      out += "\n" + close + "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ",\n";
        out += pad;
        dump_value(j[i], indent + 2, out);
      }
      out += "\n" + close + "]";
      return;
    }
    case json::value_t::number_float: out += format_number(j.get<double>()); return;
    default: out += j.dump(); return;
  }
}

}  // namespace detail

inline std::string dump_json(const json& j) {
  std::string out;
  detail::dump_value(j, 0, out);
  out += "\n";
  return out;
}

// ---------------------------------------------------------------------------------------------
// Scenario

inline const std::vector<std::string>& action_names() {
  static const std::vector<std::string> names{"classify", "covering", "verify-blender", "sweep-mu", "search", "report-all"};
  return names;
}

struct ScenarioOptions {
  long k_max = 100000;
  int trials = 100;
  int depth = 30;
  double tol = 1e-10;
  std::uint64_t seed = 0;
  long N = 10;
  bool mu_range_set = false;
  double mu_lo = 0, mu_hi = 0;
  long mu_samples = 2001;
  long max_index = 200;
  double kappa = 0.1;
  double search_tol = 0.02;
  long m_star = 10;
  long long max_den = 1000000;
};

struct Scenario {
  CycleParams params;
  std::string source;  // preset name or config path
  std::vector<std::string> actions;
  ScenarioOptions options;
  std::string out_dir = "out";
};

// Error raised while a named action runs; maps to exit status 1.
class ActionError : public std::runtime_error {
 public:
  ActionError(const std::string& action, const std::string& what) : std::runtime_error(action + ": " + what) {}
};

namespace detail {

inline void read_options(const json& j, ScenarioOptions& o) {
  if (!j.is_object()) throw InputError("field 'options' must be an object");
  auto num = [&](const char* k, auto& dst) {
    auto it = j.find(k);
    if (it == j.end()) return;
    using D = std::decay_t<decltype(dst)>;
    if constexpr (std::is_integral_v<D>) {
      if (!it->is_number_integer()) throw InputError(std::string("field 'options.") + k + "' must be an integer");
      dst = it->get<D>();
    } else {
      if (!it->is_number()) throw InputError(std::string("field 'options.") + k + "' must be a number");
      dst = it->get<double>();
    }
  };
  num("k_max", o.k_max);
  num("trials", o.trials);
  num("depth", o.depth);
  num("tol", o.tol);
  num("seed", o.seed);
  num("N", o.N);
  num("mu_samples", o.mu_samples);
  num("max_index", o.max_index);
  num("kappa", o.kappa);
  num("search_tol", o.search_tol);
  num("m_star", o.m_star);
  num("max_den", o.max_den);
  if (auto it = j.find("mu_range"); it != j.end()) {
    if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number() || !(*it)[1].is_number())
      throw InputError("field 'options.mu_range' must be [lo, hi]");
    o.mu_range_set = true;
    o.mu_lo = (*it)[0].get<double>();
    o.mu_hi = (*it)[1].get<double>();
  }
}

}  // namespace detail

// A config is either a scenario document {"preset"|"params", "actions", "options"} or a bare
// parameter document.
inline Scenario scenario_from_json(const json& j, const std::string& source) {
  if (!j.is_object()) throw InputError(source + ": configuration must be a JSON object");
  Scenario s;
  s.source = source;
  const bool wrapped = j.contains("params") || j.contains("preset") || j.contains("actions");
  try {
    if (!wrapped) {
      s.params = params_from_json(j);
    } else if (j.contains("preset")) {
      const std::string name = j["preset"].get<std::string>();
      if (!find_preset(name, s.params)) throw InputError("unknown preset '" + name + "'");
      s.source = name;
    } else {
      s.params = params_from_json(detail::require(j, "params"));
    }
    if (wrapped && j.contains("actions")) {
      for (const auto& a : j["actions"]) s.actions.push_back(a.get<std::string>());
    }
    if (j.contains("options")) detail::read_options(j["options"], s.options);
    if (j.contains("out")) s.out_dir = j["out"].get<std::string>();
  } catch (const json::exception& e) {
    throw InputError(source + ": " + e.what());
  } catch (const InputError& e) {
    throw InputError(source + ": " + e.what());
  }
  return s;
}

// A bundled preset name or a config path.
inline Scenario load_scenario(const std::string& config) {
  Scenario s;
  if (find_preset(config, s.params)) {
    s.source = config;
    return s;
  }
  if (!std::filesystem::exists(config)) throw InputError("config '" + config + "' is neither a preset nor a readable file");
  return scenario_from_json(read_json_file(config), config);
}

// ---------------------------------------------------------------------------------------------
// Results

struct ActionResult {
  std::string action;
  std::string json_file;
  json report;
  std::map<std::string, std::string> csv;  // file name -> content
  bool certification = false;              // participates in the exit status
  bool certified = false;
};

struct ScenarioResult {
  std::vector<ActionResult> results;
  int exit_code = 0;
  std::string message;
  json index;
};

namespace detail {

inline json fraction_json(const Fraction& f) {
  return {{"p", f.p}, {"q", f.q}, {"error", static_cast<double>(f.error)}};
}

inline json rare_json(const RareCondition& c) {
  json j{{"applicable", c.applicable}};
  if (c.applicable)
    j.update({{"holds", c.holds}, {"distance", c.distance}, {"nearest", c.nearest}, {"s", c.s}, {"l", c.l}, {"n", c.n}});
  return j;
}

inline json interval_json(const ActivationInterval& a) {
  return {{"family", family_name(a.family)}, {"index", a.index},   {"center", a.center},     {"half_width", a.half_width},
          {"lo", a.lo},                      {"hi", a.hi},         {"inner_lo", a.inner_lo}, {"inner_hi", a.inner_hi}};
}

inline json regime_json(const RegimeReport& r, const CycleParams& p) {
  const auto& nd = r.nondegeneracy;
  json j;
  j["case"] = case_name(p.kind);
  j["mu"] = p.mu;
  j["theta"] = r.moduli.theta;
  j["alpha"] = r.moduli.alpha;
  j["type"] = cycle_type_name(r.moduli.type);
  j["nondegeneracy"] = {{"C1", nd.C1}, {"C2", nd.C2}, {"C3", nd.C3}, {"C4", nd.C4}, {"C4_label", nd.C4_label}};
  if (r.rare_evaluated) {
    j["theta_rational"] = r.rare.rational;
    j["theta_fraction"] = fraction_json(r.rare.fraction);
    j["rare1"] = rare_json(r.rare.rare1);
    j["rare2"] = rare_json(r.rare.rare2);
    j["rare2"]["truncation"] = r.rare.truncation;
    j["abs_ab"] = r.rare.value1;
    j["abs_u_over_ax"] = r.rare.value2;
  }
  j["activation_hits"] = json::array();
  for (const auto& a : r.hits) j["activation_hits"].push_back(interval_json(a));
  j["label"] = r.label;
  j["prediction_conditional"] = r.prediction_conditional;
  j["certified"] = r.certified;
  j["notes"] = r.notes;
  return j;
}

inline json covering_json(const CoveringSet& cs, const CoverReport& cr) {
  json j;
  j["orientation"] = orientation_name(cs.orientation);
  j["n"] = cs.size();
  j["delta"] = cs.delta;
  j["delta_prime"] = exact_decimal(cs.delta_prime_exact);
  j["alpha"] = cs.alpha;
  j["alpha_eff"] = cs.alpha_eff;
  j["N"] = cs.N;
  j["k_max"] = cs.k_max;
  j["intervals"] = json::array();
  for (std::size_t i = 0; i < cs.size(); ++i)
    j["intervals"].push_back({{"k", cs.pairs[i].k},
                              {"m", cs.pairs[i].m},
                              {"rho", cs.rho[i]},
                              {"A", exact_decimal(cs.A[i])},
                              {"B", exact_decimal(cs.B[i])},
                              {"lo", exact_decimal(cs.lo[i])},
                              {"hi", exact_decimal(cs.hi[i])}});
  j["overlaps"] = json::array();
  for (const auto& o : cs.overlaps) j["overlaps"].push_back(exact_decimal(o));
  j["verification"] = {{"covered", cr.covered},
                       {"overlap_ok", cr.overlap_ok},
                       {"overlap_applicable", cr.overlap_applicable},
                       {"min_overlap", exact_decimal(cr.min_overlap)},
                       {"overlap_threshold", exact_decimal(cr.overlap_threshold)},
                       {"max_gap", exact_decimal(cr.max_gap)},
                       {"pass", cr.ok()}};
  return j;
}

inline std::string covering_csv(const CoveringSet& cs) {
  std::string s = "j,k,m,rho,lo,hi\n";
  for (std::size_t i = 0; i < cs.size(); ++i)
    s += std::to_string(i) + "," + std::to_string(cs.pairs[i].k) + "," + std::to_string(cs.pairs[i].m) + "," +
         format_number(cs.rho[i]) + "," + format_number(static_cast<double>(cs.lo[i])) + "," +
         format_number(static_cast<double>(cs.hi[i])) + "\n";
  return s;
}

inline json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline json certificate_json(const BlenderCertificate& c) {
  json j;
  j["orientation"] = orientation_name(c.orientation);
  j["trials"] = c.trials;
  j["depth"] = c.depth;
  j["tol"] = c.tol;
  j["seed"] = c.seed;
  j["slope_budget"] = c.slope_budget;
  j["tv_budget"] = c.tv_budget;
  j["passed"] = c.passed;
  j["pass"] = c.pass;
  j["note"] = c.note;
  j["covering_pairs"] = json::array();
  for (const auto& q : c.covering.pairs) j["covering_pairs"].push_back({q.k, q.m});
  j["records"] = json::array();
  for (const auto& r : c.records) {
    json t;
    t["pass"] = r.pass;
    t["failure"] = r.failure;
    t["pairs"] = json::array();
    for (const auto& q : r.pairs) t["pairs"].push_back({q.k, q.m});
    t["log10_final_diameter"] = r.log10_diameters.empty() ? 0.0 : r.log10_diameters.back();
    t["witness"] = vector_json(r.witness);
    t["witness_offset"] = r.witness_offset;
    t["max_residual"] = r.max_residual;
    t["orbit_steps_verified"] = r.membership.depth_verified;
    t["orbit_mismatch"] = r.membership.mismatch;
    j["records"].push_back(t);
  }
  return j;
}

inline std::string sweep_csv(const SweepTable& t) {
  std::string s = "mu,hit_family,index,rescaled_value,label\n";
  for (const auto& r : t.rows)
    s += format_number(r.mu) + "," + r.hit_family + "," + std::to_string(r.index) + "," + format_number(r.rescaled) + "," +
         r.label + "\n";
  return s;
}

inline bool blender_applicable(const CycleParams& p, std::string& why) {
  if (p.kind != Case::Saddle) {
    why = "blender certification covers real central multipliers";
    return false;
  }
  const Moduli m = compute_moduli(p);
  if (m.type == CycleType::II) {
    why = "type-II cycle: no blender is predicted at the cycle itself";
    return false;
  }
  if (rational_at_precision(m.theta).rational) {
    why = "rational theta";
    return false;
  }
  if (p.mu != 0) {
    why = "covering is built at mu = 0";
    return false;
  }
  return true;
}

inline Orientation orientation_for(const CycleParams& p) {
  return std::fabs(p.alpha()) < 1 ? Orientation::cs : Orientation::cu;
}

}  // namespace detail

// Checks every requested action's options before any work starts.
inline std::vector<std::string> plan_actions(const Scenario& s) {
  if (s.actions.empty()) throw InputError("no actions requested");
  const ScenarioOptions& o = s.options;
  std::vector<std::string> plan;
  bool all = false;
  for (const auto& a : s.actions) {
    if (std::find(action_names().begin(), action_names().end(), a) == action_names().end())
      throw InputError("unknown action '" + a + "'");
    if (a == "report-all") all = true;
  }
  auto want = [&](const char* a) { return all || std::find(s.actions.begin(), s.actions.end(), a) != s.actions.end(); };
  s.params.validate();
  if (o.k_max < 1) throw InputError("k_max must be >= 1");
  if (o.trials < 1) throw InputError("trials must be >= 1");
  if (o.depth < 0) throw InputError("depth must be >= 0");
  if (!(o.tol > 0)) throw InputError("tol must be positive");
  if (o.mu_samples < 1) throw InputError("mu_samples must be >= 1");
  if (o.mu_range_set && !(o.mu_hi >= o.mu_lo)) throw InputError("mu_range must satisfy lo <= hi");
  if (!(o.kappa >= 0 && o.kappa < 1)) throw InputError("kappa must lie in [0,1)");
  if (!(o.search_tol > 0)) throw InputError("search_tol must be positive");
  if (o.N < 1) throw InputError("N must be >= 1");
  if (o.max_index < 1) throw InputError("max_index must be >= 1");
  std::string why;
  const bool blender_ok = detail::blender_applicable(s.params, why);
  for (const char* a : {"classify", "covering", "verify-blender", "sweep-mu", "search"}) {
    if (!want(a)) continue;
    const std::string name = a;
    if ((name == "covering" || name == "verify-blender") && !blender_ok) {
      if (all && std::find(s.actions.begin(), s.actions.end(), name) == s.actions.end()) continue;
      throw ActionError(name, why);
    }
    if (name == "sweep-mu" && s.params.kind != Case::Saddle) {
      if (all && std::find(s.actions.begin(), s.actions.end(), name) == s.actions.end()) continue;
      throw ActionError(name, "activation intervals need real central multipliers");
    }
    plan.push_back(name);
  }
  return plan;
}

inline ScenarioResult execute_scenario(const Scenario& s) {
  ScenarioResult out;
  const std::vector<std::string> plan = plan_actions(s);
  const CycleParams& p = s.params;
  const ScenarioOptions& o = s.options;
  std::optional<CoveringSet> covering;
  std::optional<RegimeReport> regime;
  std::size_t regime_slot = SIZE_MAX;
  bool any_cert_failed = false;

  for (const std::string& a : plan) {
    ActionResult r;
    r.action = a;
    try {
      if (a == "classify") {
        regime = classify(p, o.max_index, o.kappa, o.max_den);
        r.json_file = "regime.json";
        regime_slot = out.results.size();
      } else if (a == "covering" || a == "verify-blender") {
        if (!covering) covering = build_covering_set(p, detail::orientation_for(p), o.N, o.k_max);
        if (a == "covering") {
          const CoverReport cr = verify_covering(*covering);
          r.json_file = "covering.json";
          r.report = detail::covering_json(*covering, cr);
          r.csv["covering.csv"] = detail::covering_csv(*covering);
          r.certification = true;
          r.certified = cr.ok();
        } else {
          const BlenderCertificate c = verify_blender(p, *covering, covering->orientation, o.trials, o.depth, o.tol, o.seed);
          r.json_file = "blender_certificate.json";
          r.report = detail::certificate_json(c);
          r.csv["diameters.csv"] = diameter_trace_csv(c);
          r.certification = true;
          r.certified = c.pass;
          if (c.pass && regime) regime->certified = true;
        }
      } else if (a == "sweep-mu") {
        double lo = o.mu_lo, hi = o.mu_hi;
        if (!o.mu_range_set) {
          lo = -1.5 * std::fabs(p.a(0) * p.lambda * p.x_plus(0));
          hi = 1.5 * std::fabs(p.u_minus(0) / p.gamma);
        }
        const SweepTable t = sweep_mu(p, lo, hi, o.mu_samples, o.max_index, o.kappa);
        std::map<std::string, long> counts;
        for (const auto& row : t.rows) ++counts[row.label];
        r.json_file = "sweep.json";
        r.report = {{"mu_range", {lo, hi}}, {"samples", o.mu_samples}, {"kappa", o.kappa}, {"max_index", o.max_index},
                    {"full_semantics", t.full_semantics}, {"note", t.note}, {"label_counts", counts}};
        r.csv["sweep.csv"] = detail::sweep_csv(t);
      } else if (a == "search") {
        r.json_file = "search.json";
        json j;
        if (p.kind == Case::Saddle) {
          const Moduli m = compute_moduli(p);
          const double ratio = m.type == CycleType::II ? -m.alpha / (p.a(0) * p.b(0)) : p.u_minus(0) / (p.a(0) * p.x_plus(0));
          const long double t = std::log(std::fabs(static_cast<long double>(ratio))) / std::log(std::fabs(static_cast<long double>(p.gamma)));
          const KmSearch ks = search_km(p, t, o.search_tol, o.k_max, default_parity(p));
          j["target_value"] = ratio;
          j["target_log"] = static_cast<double>(t);
          j["tol"] = o.search_tol;
          j["count"] = ks.pairs.size();
          j["advisory"] = ks.advisory;
          j["pairs"] = json::array();
          std::string csv = "k,m,value\n";
          const std::size_t shown = std::min<std::size_t>(ks.pairs.size(), 200);
          for (std::size_t i = 0; i < shown; ++i) j["pairs"].push_back({ks.pairs[i].k, ks.pairs[i].m, static_cast<double>(ks.pairs[i].value)});
          for (const auto& q : ks.pairs) csv += std::to_string(q.k) + "," + std::to_string(q.m) + "," + format_number(static_cast<double>(q.value)) + "\n";
          r.csv["search.csv"] = csv;
          if (m.type == CycleType::II) {
            std::vector<std::pair<long, long>> pairs;
            for (std::size_t i = 0; i < std::min<std::size_t>(ks.pairs.size(), 5); ++i) pairs.push_back({ks.pairs[i].k, ks.pairs[i].m});
            j["secondary_mu"] = json::array();
            for (const auto& sm : secondary_cycle_mu(p, pairs))
              j["secondary_mu"].push_back({{"k", sm.k}, {"m", sm.m}, {"mu_lambda", sm.mu_lambda}, {"mu_gamma", sm.mu_gamma},
                                           {"relative_discrepancy", sm.relative_discrepancy}, {"discrepancy", sm.discrepancy}});
            const ThetaPrime tp = theta_prime_estimate(p, o.m_star);
            j["theta_prime"] = {{"m_star", o.m_star}, {"leading", tp.leading}, {"direct", tp.direct}, {"gamma_prime", tp.gamma_prime}};
          }
        } else {
          const FocusSequence fs = focus_sequences(p, std::min<long>(o.k_max, 100000));
          j["index"] = fs.index_name;
          j["threshold"] = fs.threshold;
          j["reciprocal"] = fs.reciprocal;
          j["count"] = fs.indices.size();
          j["indices"] = fs.indices;
          j["advisories"] = fs.advisories;
        }
        r.report = j;
      }
    } catch (const InputError& e) {
      throw ActionError(a, e.what());
    } catch (const PreconditionError& e) {
      throw ActionError(a, e.what());
    } catch (const ConvergenceError& e) {
      throw ActionError(a, e.what());
    } catch (const ChartError& e) {
      throw ActionError(a, e.what());
    }
    if (r.certification && !r.certified) any_cert_failed = true;
    out.results.push_back(std::move(r));
  }
  if (regime) out.results[regime_slot].report = detail::regime_json(*regime, p);
  for (auto& r : out.results) {
    r.report["seed"] = o.seed;
    r.report["action"] = r.action;
  }
  out.exit_code = any_cert_failed ? 2 : 0;
  out.message = any_cert_failed ? "certification failed" : "ok";
  return out;
}

// Writes one JSON file per action, the CSV tables and index.json. Returns the written paths.
inline std::vector<std::string> emit_report(ScenarioResult& res, const Scenario& s) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(s.out_dir, ec);
  if (ec) throw InputError("cannot create output directory '" + s.out_dir + "': " + ec.message());
  std::vector<std::string> written;
  auto write = [&](const std::string& name, const std::string& content) {
    const fs::path path = fs::path(s.out_dir) / name;
    std::ofstream f(path, std::ios::binary);
    if (!f || !(f << content)) throw InputError("cannot write '" + path.string() + "'");
    written.push_back(path.string());
  };
  json index;
  index["source"] = s.source;
  index["seed"] = s.options.seed;
  index["exit_code"] = res.exit_code;
  index["params"] = params_to_json(s.params);
  index["actions"] = json::array();
  for (const auto& r : res.results) {
    json e{{"action", r.action}, {"file", r.json_file}, {"csv", json::array()}};
    if (r.certification) e["certified"] = r.certified;
    write(r.json_file, dump_json(r.report));
    for (const auto& [name, content] : r.csv) {
      write(name, content);
      e["csv"].push_back(name);
    }
    index["actions"].push_back(e);
  }
  res.index = index;
  write("index.json", dump_json(index));
  return written;
}

// Full pipeline with the exit-status contract: 0 all certifications passed, 2 a certification
// failed, 1 input or action error.
inline ScenarioResult run_scenario(const Scenario& s) {
  ScenarioResult res;
  try {
    res = execute_scenario(s);
    emit_report(res, s);
  } catch (const ActionError& e) {
    res = ScenarioResult{};
    res.exit_code = 1;
    res.message = e.what();
  } catch (const InputError& e) {
    res = ScenarioResult{};
    res.exit_code = 1;
    res.message = e.what();
  } catch (const PreconditionError& e) {
    res = ScenarioResult{};
    res.exit_code = 1;
    res.message = e.what();
  }
  return res;
}

}  // namespace blab
