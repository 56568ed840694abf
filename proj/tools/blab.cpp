#include "blab/report.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Heterodimensional-cycle blender lab: classification, covering and blender certificates"};
  std::string action, config, out = "out";
  std::uint64_t seed = 0;
  long k_max = 0;
  int trials = 0, depth = -1;
  app.add_option("action", action, "classify | covering | verify-blender | sweep-mu | search | report-all")
      ->required()
      ->check(CLI::IsMember(blab::action_names()));
  app.add_option("--config", config, "scenario or parameter JSON file, or a preset name")->required();
  app.add_option("--out", out, "output directory");
  auto* seed_opt = app.add_option("--seed", seed, "random seed (default 0)");
  auto* kmax_opt = app.add_option("--k-max", k_max, "largest k searched")->check(CLI::PositiveNumber);
  auto* trials_opt = app.add_option("--trials", trials, "random discs for verify-blender")->check(CLI::PositiveNumber);
  auto* depth_opt = app.add_option("--depth", depth, "refinement depth for verify-blender")->check(CLI::NonNegativeNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  blab::Scenario s;
  try {
    s = blab::load_scenario(config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  s.actions = {action};
  s.out_dir = out;
  if (*seed_opt) s.options.seed = seed;
  if (*kmax_opt) s.options.k_max = k_max;
  if (*trials_opt) s.options.trials = trials;
  if (*depth_opt) s.options.depth = depth;

  blab::ScenarioResult r = blab::run_scenario(s);
  if (r.exit_code == 1) {
    std::cerr << "error: " << r.message << "\n";
    return 1;
  }
  for (const auto& a : r.results)
    std::cout << a.action << ": " << s.out_dir << "/" << a.json_file
              << (a.certification ? (a.certified ? " [certified]" : " [FAILED]") : "") << "\n";
  std::cout << "exit " << r.exit_code << "\n";
  return r.exit_code;
}
