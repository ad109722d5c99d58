// lmlab: batch runner for finite-world language-model experiments.
//
//   lmlab <subcommand> [--config cfg.json] [--out dir] [--seed n] [--jobs n]
//
// Exit status: 0 when every check holds and every solver converged, 1 when a
// check fails, 2 on invalid configuration or runtime error.

#include <omp.h>

#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "lmlab/error.hpp"
#include "lmlab/experiment.hpp"
#include "lmlab/io.hpp"

namespace {

struct CommonOptions {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

int run(const std::string& command, const CommonOptions& opts) {
  using namespace lmlab;
  ExperimentConfig cfg = opts.config.empty() ? ExperimentConfig{} : parse_config(read_json(opts.config));
  if (opts.seed) cfg.seed = *opts.seed;
  omp_set_num_threads(opts.jobs);
  return run_experiment(command, cfg, opts.out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite-world language-model experiment runner"};
  app.require_subcommand(1);

  CommonOptions opts;
  const std::pair<const char*, const char*> commands[] = {
      {"synth", "Generate the world and task (world.json)"},
      {"train", "Train the configured model (model.json)"},
      {"certify", "Certify the task as natural (certificate.json)"},
      {"bound", "Evaluate the transfer bounds over the epsilon sweep (bounds.csv, bounds.json)"},
      {"quad-verify", "Compare trained and closed-form Quad solutions (quad.json)"},
      {"fit-logz", "Fit the quadratic log-partition model (logz.json)"},
      {"sweep", "Interpolation sweep and square-root trend fit (sweep.csv, sqrtfit.json)"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opts.config, "JSON experiment configuration")->check(CLI::ExistingFile);
    sub->add_option("--out", opts.out, "Output directory")->capture_default_str();
    sub->add_option("--seed", opts.seed, "Override the configured seed");
    sub->add_option("--jobs", opts.jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, opts);
  } catch (const lmlab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
  }
  return 2;
}
