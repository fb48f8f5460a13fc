// Experiment drivers behind the CLI: ground-truth generation, observation
// sampling, and the per-kind runners that write CSV/JSON outputs.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "deepfact/config.hpp"
#include "deepfact/core.hpp"
#include "deepfact/flow.hpp"

namespace deepfact {

// Product of two d x r standard Gaussian factors; deterministic in the seed.
// The result has numerical rank exactly r (checked, almost surely true).
Matrix ground_truth_rank_r(int dim, int rank, std::uint64_t seed);

// target on the diagonal blocks, zero elsewhere.
Matrix ground_truth_block_constant(const BlockSpec& spec);

// Observation positions with zero targets; combine with
// ObservationSet::with_targets to attach values. Modes: uniform (count
// positions without replacement), diagonal (first count diagonal entries,
// count = 0 meaning all), upper_triangular (all entries on or above the
// diagonal; count ignored).
ObservationSet sample_observations(int dim, int count, std::uint64_t seed,
                                   const std::string& mode);

struct CliOptions {
  std::optional<std::string> out_override;
  std::optional<std::uint64_t> seed_override;
  int threads = 1;
};

// One phase outcome of the pretrain-then-continue protocol.
struct PlasticityCell {
  int depth = 0;
  int trial = 0;
  std::string mode;  // pre | warm | cold
  double final_loss = 0.0;
  double stable_rank = 0.0;
  double effective_rank = 0.0;
  double reconstruction_error = 0.0;
  bool converged = false;
};

struct PlasticitySettings {
  int dim = 0;
  std::vector<int> depths;
  int count_pre = 0;
  int count_post = 0;
  double init_std = 0.0;
  // When non-empty, one entry per depth (aligned with `depths`) replacing
  // init_std, so the product-matrix starting scale can be held roughly
  // depth-invariant instead of the factor-entry scale.
  std::vector<double> init_std_per_depth;
  int trials = 1;
  std::uint64_t obs_seed = 0;
  std::uint64_t init_seed = 0;
  Matrix truth;
  IntegratorConfig integrator;
  // Pre-training stops at integrator.stop_loss; the continuation phases
  // (warm and cold) stop at this threshold instead when it is set.
  std::optional<double> stop_loss_post;
  int threads = 1;
};

// Per (depth, trial): train a fresh Gaussian chain on the pre pattern, then
// continue the trained chain on the superset pattern (warm) and retrain the
// same fresh chain on the superset directly (cold). Rows come back sorted by
// (depth, trial, mode order pre/warm/cold).
std::vector<PlasticityCell> run_plasticity_protocol(
    const PlasticitySettings& settings);

// Executes the configured experiment, writing CSV and summary.json under the
// output directory. Returns the process exit code (0 even when some runs are
// flagged as non-converged).
int run_experiment(const ExperimentConfig& cfg, const CliOptions& opts);

// Spectrum metrics of the configured ground-truth matrix (metrics subcommand).
int run_metrics(const ExperimentConfig& cfg, const CliOptions& opts);

// Shortest round-trip decimal formatting used for all CSV numbers.
std::string format_double(double v);

}  // namespace deepfact
