#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "deepfact/config.hpp"
#include "deepfact/core.hpp"
#include "deepfact/experiment.hpp"

namespace {

struct SubSpec {
  const char* name;
  const char* blurb;
};

constexpr SubSpec kSubcommands[] = {
    {"simulate", "Integrate gradient flow / descent and record trajectories"},
    {"theory", "Evaluate predicted limit spectra on block-structured targets"},
    {"coupling", "Classify entry-gradient coupling for an observation pattern"},
    {"plasticity", "Run the two-phase warm-start vs. fresh-start protocol"},
    {"sweep", "Grid over depth, width parameter, and init scale"},
    {"metrics", "Print spectrum and rank measures of a ground-truth matrix"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical laboratory for deep matrix-factorization training dynamics"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  int threads = 1;
  for (const SubSpec& spec : kSubcommands) {
    CLI::App* sub = app.add_subcommand(spec.name, spec.blurb);
    sub->add_option("--config", config_path, "Path to key=value experiment config")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "Output directory (overrides the config)");
    sub->add_option("--seed", seed, "Override the base seed for stochastic pieces");
    sub->add_option("--threads", threads, "Worker threads for trial grids")
        ->check(CLI::PositiveNumber);
  }
  CLI11_PARSE(app, argc, argv);

  CLI::App* sub = app.get_subcommands().front();
  try {
    const deepfact::ExperimentConfig cfg = deepfact::parse_config_file(config_path);
    deepfact::CliOptions opts;
    if (!out_dir.empty()) opts.out_override = out_dir;
    if (sub->count("--seed") > 0) opts.seed_override = seed;
    opts.threads = threads;

    const std::string name = sub->get_name();
    if (name == "metrics") return deepfact::run_metrics(cfg, opts);
    if (name != deepfact::kind_name(cfg.kind))
      throw deepfact::ValidationError(
          "config kind '" + std::string(deepfact::kind_name(cfg.kind)) +
          "' does not match subcommand '" + name + "'");
    return deepfact::run_experiment(cfg, opts);
  } catch (const deepfact::ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const deepfact::ValidationError& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
