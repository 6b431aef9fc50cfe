#include <iostream>

#include "CLI11.hpp"

#include "cimsec/expcli/experiment.hpp"

namespace ex = cimsec::expcli;

int main(int argc, char** argv) {
  CLI::App app{"Compute-in-memory security experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Run one experiment config");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();
  run->add_option("-o,--out", out_dir, "Output directory (overrides output_dir)");
  run->add_flag("-q,--quiet", quiet, "No progress log");

  std::string result_dir;
  auto* rep = app.add_subcommand("report", "Summarize result directories");
  rep->add_option("dir", result_dir, "Result directory")->required();

  auto* presets = app.add_subcommand("list-presets", "List built-in presets");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto cfg = ex::load_config(config_path);
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      const auto result = ex::run_experiment(cfg, quiet ? nullptr : &std::cerr);
      ex::write_results(cfg, result, cfg.output_dir);
      std::cout << cfg.output_dir << ": " << (result.all_pass() ? "all checks pass" : "some checks FAILED") << "\n";
      return result.all_pass() ? 0 : 1;
    }
    if (*rep) {
      std::cout << ex::report(result_dir);
      return 0;
    }
    if (*presets) {
      std::cout << ex::list_presets();
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
