// Command-line front end: resesop <command> --config <path> [--seed N] [--out DIR]

#include <iostream>

#include "CLI11.hpp"
#include "resesop/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Regularized sequential subspace optimization for inexact dynamic inverse problems"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out_dir;

  const char* commands[][2] = {
      {"simulate", "simulate dynamic data for an experiment"},
      {"reconstruct", "run the solver on simulated or supplied data"},
      {"analyze-redundancy", "compute dependency norms B_i of the subproblems"},
      {"evaluate", "compare a reconstruction with its reference (ssim, psnr, mse)"},
      {"export", "write an array file as a 16-bit PGM image"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON configuration file")->required();
    sub->add_option("--seed", seed, "override the configured seed")->each([&](const std::string&) { seed_given = true; });
    sub->add_option("--out", out_dir, "override the output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : resesop::kExitInput;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  resesop::ExperimentConfig cfg;
  try {
    cfg = resesop::load_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << name << ": " << e.what() << '\n';
    return resesop::kExitInput;
  }
  if (seed_given) cfg.seed = seed;
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  return resesop::run_command(name, std::move(cfg));
}
