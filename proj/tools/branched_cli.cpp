// Command-line front end: branched <command> [options]
//
//   distance  --input instance.json --alpha A [--mode enumerate|heuristic] [--out edges.csv]
//   bounds    --input instance.json --alpha A [--p P] [--j-min J --j-max J] [--out table.csv]
//   dyadic    [--input measure.json | --dim D] --alpha A [--mode bound|probe] [--j-min --j-max]
//   energies  --input plan.json --alpha A [--grid K] [--out path.csv]
//   verify    [--seed S] [--trials N] [--out replay.json]
//
// Exit codes: 0 success, 2 bad input or precondition, 3 property failure,
// 4 convergence failure.

#include <CLI11.hpp>

#include <iostream>

#include "branched/harness.hpp"

int main(int argc, char** argv) {
  branched::ExperimentConfig cfg;
  CLI::App app{"Branched transport distances, energies and bounds"};
  app.add_option("command", cfg.command, "distance | bounds | dyadic | energies | verify")->required();
  app.add_option("--input", cfg.inputs, "Instance, measure or plan file");
  app.add_option("--alpha", cfg.alpha, "Branching exponent in (0,1]");
  double p = 0.0;
  auto* p_opt = app.add_option("--p", p, "Wasserstein exponent (default 1/alpha)");
  app.add_option("--j-min", cfg.j_min, "First dyadic level");
  app.add_option("--j-max", cfg.j_max, "Last dyadic level");
  app.add_option("--grid", cfg.grid, "Time grid size K");
  app.add_option("--mode", cfg.mode, "enumerate|heuristic (distance), bound|probe (dyadic)");
  app.add_option("--seed", cfg.seed, "Seed for verify");
  app.add_option("--trials", cfg.trials, "Trials for verify");
  app.add_option("--out", cfg.out, "CSV table (or replay file for verify)");
  app.add_option("--dim", cfg.dim, "Dimension of the unit cube for dyadic without --input");
  app.add_flag("--inject-sentinel", cfg.inject_sentinel, "verify: add a massless moving atom to trial 0");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return branched::kExitPrecondition;
  }
  if (*p_opt) cfg.p = p;

  try {
    return branched::run(cfg, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return branched::exit_code_for(e);
  }
}
