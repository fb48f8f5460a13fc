// Flat key = value experiment configuration. Lines hold one assignment each,
// '#' starts a comment, and list-valued keys take comma-separated entries.
// The key vocabulary is fixed; unknown keys are parse errors.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "deepfact/core.hpp"

namespace deepfact {

// Malformed config text or file: bad syntax, unknown key, bad number.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind { Simulate, Theory, Coupling, Plasticity, Sweep };

const char* kind_name(ExperimentKind kind);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Simulate;
  int dim = 0;
  // "depth" accepts a comma list for theory/sweep/plasticity runs.
  std::vector<int> depths;
  // alpha_m | alpha_m_inf | identity | all_ones | gaussian
  std::string init_scheme;
  // "init.alpha" and "init.m" accept comma lists for theory/sweep; "inf" is a
  // valid m entry.
  std::vector<double> alphas;
  std::vector<double> ms;
  // "init.std" accepts a comma list (one entry per depth) for plasticity,
  // matching the product-matrix starting scale across depths; a single
  // value applies to every depth.
  double init_std = 0.0;
  std::vector<double> init_stds;
  // uniform | diagonal | block | upper_triangular
  std::string obs_mode;
  // "obs.count": entries for uniform, block size for block, and the
  // "pre,post" pair for plasticity.
  int obs_count = 0;
  int obs_count_post = 0;
  std::uint64_t obs_seed = 0;
  std::string truth_kind;  // rank_r | block_constant
  int truth_rank = 0;
  std::uint64_t truth_seed = 0;
  std::string integrator_method = "rk4";  // rk4 | euler
  double integrator_step = 0.0;
  double integrator_t_max = 1e6;
  // "integrator.stop_loss" accepts a "pre,post" pair for plasticity runs,
  // mirroring the paired obs.count; a single value applies to every phase.
  double integrator_stop_loss = 1e-12;
  std::optional<double> integrator_stop_loss_post;
  int trials = 1;
  std::string out = "out";

  // Keys actually present in the file, for required-key validation.
  std::vector<std::string> present;

  bool has(const std::string& key) const;
};

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& source_name);
ExperimentConfig parse_config_file(const std::string& path);

// Kind-specific semantic validation; throws ValidationError.
void validate_config(const ExperimentConfig& cfg);

}  // namespace deepfact
