#include "deepfact/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "deepfact/graph.hpp"
#include "deepfact/metrics.hpp"
#include "deepfact/rng.hpp"
#include "deepfact/theory.hpp"

namespace deepfact {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr std::uint64_t kInitStream = 0x1817u;

std::string join_row(const std::vector<std::string>& cells) {
  std::string row;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (k) row.push_back(',');
    row += cells[k];
  }
  row.push_back('\n');
  return row;
}

struct CsvWriter {
  std::ofstream out;

  explicit CsvWriter(const fs::path& path) : out(path, std::ios::binary) {
    if (!out) throw std::runtime_error("cannot open " + path.string());
  }
  void row(const std::vector<std::string>& cells) { out << join_row(cells); }
};

std::vector<std::string> trajectory_header(int dim) {
  std::vector<std::string> h = {"trial", "t", "loss"};
  for (int k = 1; k <= dim; ++k) h.push_back("sigma_" + std::to_string(k));
  h.insert(h.end(), {"stable_rank", "effective_rank", "balance_drift",
                     "conserved_drift"});
  return h;
}

IntegratorConfig integrator_from_config(const ExperimentConfig& cfg) {
  IntegratorConfig ic;
  ic.method = cfg.integrator_method == "euler" ? IntegrationMethod::Euler
                                               : IntegrationMethod::RK4;
  ic.step = cfg.integrator_step;
  ic.t_max = cfg.integrator_t_max;
  ic.stop_loss = cfg.integrator_stop_loss;
  return ic;
}

BlockSpec block_spec_from_config(const ExperimentConfig& cfg) {
  if (cfg.obs_mode == "diagonal") return BlockSpec{1, cfg.dim, 1.0};
  return BlockSpec{cfg.obs_count, cfg.dim / cfg.obs_count, 1.0};
}

InitScheme scheme_for(const ExperimentConfig& cfg, double alpha, double m,
                      std::uint64_t init_seed) {
  if (cfg.init_scheme == "alpha_m") {
    if (std::isinf(m)) return InitScheme::alpha_m_infinity(alpha);
    return InitScheme::alpha_m(alpha, m);
  }
  if (cfg.init_scheme == "alpha_m_inf") return InitScheme::alpha_m_infinity(alpha);
  if (cfg.init_scheme == "identity") return InitScheme::identity(alpha);
  if (cfg.init_scheme == "all_ones") return InitScheme::all_ones(alpha);
  return InitScheme::gaussian(cfg.init_std, init_seed);
}

std::uint64_t base_seed(const ExperimentConfig& cfg, const CliOptions& opts) {
  if (opts.seed_override) return *opts.seed_override;
  return rng::derive_seed(cfg.obs_seed ^ cfg.truth_seed, kInitStream);
}

const char* status_name(RunStatus status) {
  switch (status) {
    case RunStatus::Converged: return "converged";
    case RunStatus::NonConvergence: return "non_convergence";
    case RunStatus::StepCollapse: return "step_collapse";
  }
  return "unknown";
}

fs::path prepare_out_dir(const ExperimentConfig& cfg, const CliOptions& opts) {
  const fs::path dir = opts.out_override ? *opts.out_override : cfg.out;
  fs::create_directories(dir);
  return dir;
}

Matrix truth_from_config(const ExperimentConfig& cfg) {
  if (cfg.obs_mode == "block" || cfg.truth_kind == "block_constant")
    return ground_truth_block_constant(block_spec_from_config(cfg));
  return ground_truth_rank_r(cfg.dim, cfg.truth_rank, cfg.truth_seed);
}

ObservationSet observations_from_config(const ExperimentConfig& cfg,
                                        const Matrix& truth) {
  if (cfg.obs_mode == "block")
    return build_observation_block(block_spec_from_config(cfg));
  return sample_observations(cfg.dim, cfg.obs_count, cfg.obs_seed, cfg.obs_mode)
      .with_targets(truth);
}

void append_trajectory_rows(CsvWriter& csv, const Trajectory& traj,
                            int trial) {
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    std::vector<std::string> cells = {std::to_string(trial),
                                      format_double(traj.times[k]),
                                      format_double(traj.losses[k])};
    const Vector& sv = traj.singular_values[k];
    for (Eigen::Index i = 0; i < sv.size(); ++i)
      cells.push_back(format_double(sv(i)));
    cells.push_back(format_double(traj.stable_ranks[k]));
    cells.push_back(format_double(traj.effective_ranks[k]));
    cells.push_back(format_double(traj.balance_drift[k]));
    cells.push_back(format_double(traj.conserved_drift[k]));
    csv.row(cells);
  }
}

int run_simulate(const ExperimentConfig& cfg, const CliOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = prepare_out_dir(cfg, opts);
  const Matrix truth = truth_from_config(cfg);
  const ObservationSet obs = observations_from_config(cfg, truth);
  const IntegratorConfig ic = integrator_from_config(cfg);
  const std::uint64_t seed = base_seed(cfg, opts);
  const int depth = cfg.depths[0];

  CsvWriter csv(dir / "trajectory.csv");
  csv.row(trajectory_header(cfg.dim));
  json trials_summary = json::array();
  bool all_converged = true;
  for (int trial = 0; trial < cfg.trials; ++trial) {
    const double alpha = cfg.alphas.empty() ? 1.0 : cfg.alphas[0];
    const double m = cfg.ms.empty() ? 2.0 : cfg.ms[0];
    const InitScheme scheme =
        scheme_for(cfg, alpha, m, rng::derive_seed(seed, 7000 + trial));
    const FactorChain init = build_init(scheme, depth, cfg.dim);
    const Trajectory traj = integrate_gradient_flow(init, obs, ic);
    append_trajectory_rows(csv, traj, trial);
    json t;
    t["trial"] = trial;
    t["status"] = status_name(traj.status);
    t["final_loss"] = traj.losses.back();
    t["final_effective_rank"] = traj.effective_ranks.back();
    t["reduced_path"] = traj.used_reduced_path;
    trials_summary.push_back(t);
    all_converged = all_converged && traj.status == RunStatus::Converged;
  }

  json summary;
  summary["kind"] = kind_name(cfg.kind);
  summary["dim"] = cfg.dim;
  summary["depth"] = depth;
  summary["trials"] = trials_summary;
  summary["all_converged"] = all_converged;
  summary["wall_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
  std::ofstream(dir / "summary.json") << summary.dump(2) << "\n";
  return 0;
}

int run_theory(const ExperimentConfig& cfg, const CliOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = prepare_out_dir(cfg, opts);
  const BlockSpec spec = block_spec_from_config(cfg);
  std::vector<int> depths = cfg.depths;
  std::vector<double> ms = cfg.ms;
  std::vector<double> alphas = cfg.alphas;
  std::sort(depths.begin(), depths.end());
  std::sort(ms.begin(), ms.end());
  std::sort(alphas.begin(), alphas.end());

  CsvWriter csv(dir / "theory.csv");
  csv.row({"depth", "m", "alpha", "branch", "sigma1", "sigma_secondary",
           "srank_limit"});
  int rows = 0;
  for (int depth : depths)
    for (double m : ms)
      for (double alpha : alphas) {
        const InitScheme scheme = std::isinf(m)
                                      ? InitScheme::alpha_m_infinity(alpha)
                                      : InitScheme::alpha_m(alpha, m);
        const LimitSpectrum limit = predict_limit(spec, scheme, depth);
        csv.row({std::to_string(depth),
                 std::isinf(m) ? "inf" : format_double(m),
                 format_double(alpha), branch_name(limit.branch),
                 format_double(limit.sigma1),
                 format_double(limit.sigma_secondary),
                 format_double(srank_limit(limit))});
        ++rows;
      }

  json summary;
  summary["kind"] = kind_name(cfg.kind);
  summary["rows"] = rows;
  summary["block_size"] = spec.block_size;
  summary["num_blocks"] = spec.num_blocks;
  summary["wall_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
  std::ofstream(dir / "summary.json") << summary.dump(2) << "\n";
  return 0;
}

int run_coupling(const ExperimentConfig& cfg, const CliOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = prepare_out_dir(cfg, opts);
  ObservationSet obs = [&] {
    if (cfg.obs_mode == "block")
      return build_observation_block(block_spec_from_config(cfg));
    return sample_observations(cfg.dim, cfg.obs_count, cfg.obs_seed,
                               cfg.obs_mode);
  }();
  const double alpha = cfg.alphas.empty() ? 1.0 : cfg.alphas[0];
  const double m = cfg.ms.empty() ? 2.0 : cfg.ms[0];
  const InitScheme scheme =
      scheme_for(cfg, alpha, m, rng::derive_seed(base_seed(cfg, opts), 5));
  const FactorChain chain = build_init(scheme, cfg.depths[0], cfg.dim);
  const CouplingReport rep = detect_decoupling(chain, obs);

  CsvWriter csv(dir / "gram.csv");
  for (Eigen::Index i = 0; i < rep.gram.rows(); ++i) {
    std::vector<std::string> cells;
    for (Eigen::Index j = 0; j < rep.gram.cols(); ++j)
      cells.push_back(format_double(rep.gram(i, j)));
    csv.row(cells);
  }

  json summary;
  summary["kind"] = kind_name(cfg.kind);
  switch (rep.verdict) {
    case CouplingVerdict::Coupled:
      summary["verdict"] = "coupled";
      break;
    case CouplingVerdict::Decoupled:
      summary["verdict"] = "decoupled";
      break;
    case CouplingVerdict::NumericallyDecoupledAtSampledTimes:
      summary["verdict"] = "numerically_decoupled_at_sampled_times";
      break;
  }
  if (rep.structural_rule) summary["structural_rule"] = *rep.structural_rule;
  summary["partition"] = rep.partition;
  summary["observations"] = obs.size();
  summary["wall_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
  std::ofstream(dir / "summary.json") << summary.dump(2) << "\n";
  return 0;
}

int run_sweep(const ExperimentConfig& cfg, const CliOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = prepare_out_dir(cfg, opts);
  const BlockSpec spec = block_spec_from_config(cfg);
  const ObservationSet obs = build_observation_block(spec);
  const IntegratorConfig ic = integrator_from_config(cfg);
  std::vector<int> depths = cfg.depths;
  std::vector<double> ms = cfg.ms.empty() ? std::vector<double>{2.0} : cfg.ms;
  std::vector<double> alphas = cfg.alphas;
  std::sort(depths.begin(), depths.end());
  std::sort(ms.begin(), ms.end());
  std::sort(alphas.begin(), alphas.end());

  CsvWriter csv(dir / "sweep.csv");
  {
    std::vector<std::string> h = {"depth", "m", "alpha", "final_loss"};
    for (int k = 1; k <= cfg.dim; ++k)
      h.push_back("sigma_" + std::to_string(k));
    h.insert(h.end(), {"stable_rank", "effective_rank", "converged"});
    csv.row(h);
  }
  bool all_converged = true;
  for (int depth : depths)
    for (double m : ms)
      for (double alpha : alphas) {
        const InitScheme scheme = scheme_for(cfg, alpha, m, 0);
        const FactorChain init = build_init(scheme, depth, cfg.dim);
        const Trajectory traj = integrate_gradient_flow(init, obs, ic);
        std::vector<std::string> cells = {
            std::to_string(depth), std::isinf(m) ? "inf" : format_double(m),
            format_double(alpha), format_double(traj.losses.back())};
        const Vector& sv = traj.singular_values.back();
        for (Eigen::Index i = 0; i < sv.size(); ++i)
          cells.push_back(format_double(sv(i)));
        cells.push_back(format_double(traj.stable_ranks.back()));
        cells.push_back(format_double(traj.effective_ranks.back()));
        const bool ok = traj.status == RunStatus::Converged;
        cells.push_back(ok ? "1" : "0");
        csv.row(cells);
        all_converged = all_converged && ok;
      }

  json summary;
  summary["kind"] = kind_name(cfg.kind);
  summary["all_converged"] = all_converged;
  summary["wall_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
  std::ofstream(dir / "summary.json") << summary.dump(2) << "\n";
  return 0;
}

int run_plasticity(const ExperimentConfig& cfg, const CliOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = prepare_out_dir(cfg, opts);
  PlasticitySettings settings;
  settings.dim = cfg.dim;
  settings.depths = cfg.depths;
  settings.count_pre = cfg.obs_count;
  settings.count_post = cfg.obs_count_post;
  settings.init_std = cfg.init_std;
  if (cfg.init_stds.size() > 1) settings.init_std_per_depth = cfg.init_stds;
  settings.trials = cfg.trials;
  settings.obs_seed = cfg.obs_seed;
  settings.init_seed = base_seed(cfg, opts);
  settings.truth = ground_truth_rank_r(cfg.dim, cfg.truth_rank, cfg.truth_seed);
  settings.integrator = integrator_from_config(cfg);
  settings.stop_loss_post = cfg.integrator_stop_loss_post;
  settings.threads = opts.threads;
  const std::vector<PlasticityCell> cells = run_plasticity_protocol(settings);

  CsvWriter csv(dir / "plasticity.csv");
  csv.row({"depth", "trial", "mode", "final_loss", "stable_rank",
           "effective_rank", "reconstruction_error", "converged"});
  for (const PlasticityCell& c : cells)
    csv.row({std::to_string(c.depth), std::to_string(c.trial), c.mode,
             format_double(c.final_loss), format_double(c.stable_rank),
             format_double(c.effective_rank),
             format_double(c.reconstruction_error), c.converged ? "1" : "0"});

  json gaps = json::object();
  bool all_converged = true;
  for (int depth : cfg.depths) {
    double warm = 0.0, cold = 0.0;
    int count = 0;
    for (const PlasticityCell& c : cells) {
      if (c.depth != depth) continue;
      all_converged = all_converged && c.converged;
      if (c.mode == "warm") {
        warm += c.effective_rank;
        ++count;
      } else if (c.mode == "cold") {
        cold += c.effective_rank;
      }
    }
    if (count > 0)
      gaps[std::to_string(depth)] = (warm - cold) / count;
  }

  json summary;
  summary["kind"] = kind_name(cfg.kind);
  summary["effective_rank_gap_warm_minus_cold"] = gaps;
  summary["all_converged"] = all_converged;
  summary["wall_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
  std::ofstream(dir / "summary.json") << summary.dump(2) << "\n";
  return 0;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

Matrix ground_truth_rank_r(int dim, int rank, std::uint64_t seed) {
  if (dim < 1) throw ValidationError("ground_truth_rank_r: dim < 1");
  if (rank < 1 || rank > dim)
    throw ValidationError("ground_truth_rank_r: rank out of range");
  Matrix u(dim, rank), v(dim, rank);
  const std::uint64_t su = rng::derive_seed(seed, 1);
  const std::uint64_t sv = rng::derive_seed(seed, 2);
  std::uint64_t draw = 0;
  for (int i = 0; i < dim; ++i)
    for (int k = 0; k < rank; ++k) u(i, k) = rng::gaussian(su, draw++);
  draw = 0;
  for (int i = 0; i < dim; ++i)
    for (int k = 0; k < rank; ++k) v(i, k) = rng::gaussian(sv, draw++);
  Matrix w = u * v.transpose();
  const Vector s = spectrum(w);
  if (!(s(rank - 1) > 1e-10 * s(0)) ||
      (rank < dim && !(s(rank) <= 1e-10 * s(0))))
    throw std::logic_error("ground_truth_rank_r: generated matrix is rank-deficient");
  return w;
}

Matrix ground_truth_block_constant(const BlockSpec& spec) {
  spec.validate();
  const int s = spec.block_size;
  Matrix w = Matrix::Zero(spec.dim(), spec.dim());
  for (int b = 0; b < spec.num_blocks; ++b)
    w.block(b * s, b * s, s, s).setConstant(spec.target);
  return w;
}

ObservationSet sample_observations(int dim, int count, std::uint64_t seed,
                                   const std::string& mode) {
  if (dim < 1) throw ValidationError("sample_observations: dim < 1");
  std::vector<Observation> entries;
  if (mode == "uniform") {
    const std::uint64_t cells =
        static_cast<std::uint64_t>(dim) * static_cast<std::uint64_t>(dim);
    if (count < 1 || static_cast<std::uint64_t>(count) > cells)
      throw ValidationError("sample_observations: count out of range");
    for (std::uint64_t p : rng::sample_without_replacement(
             seed, cells, static_cast<std::uint64_t>(count)))
      entries.push_back({static_cast<int>(p / dim), static_cast<int>(p % dim),
                         0.0});
  } else if (mode == "diagonal") {
    int n = count == 0 ? dim : count;
    if (n < 1 || n > dim)
      throw ValidationError("sample_observations: diagonal count out of range");
    for (int i = 0; i < n; ++i) entries.push_back({i, i, 0.0});
  } else if (mode == "upper_triangular") {
    for (int i = 0; i < dim; ++i)
      for (int j = i; j < dim; ++j) entries.push_back({i, j, 0.0});
  } else {
    throw ValidationError("sample_observations: unknown mode '" + mode + "'");
  }
  return ObservationSet(dim, std::move(entries));
}

std::vector<PlasticityCell> run_plasticity_protocol(
    const PlasticitySettings& settings) {
  if (settings.dim < 1 || settings.depths.empty())
    throw ValidationError("run_plasticity_protocol: bad dimensions");
  if (settings.count_pre < 1 || settings.count_post <= settings.count_pre)
    throw ValidationError("run_plasticity_protocol: need post > pre >= 1");
  if (settings.init_std_per_depth.empty()) {
    if (!(settings.init_std > 0.0))
      throw ValidationError("run_plasticity_protocol: init_std must be positive");
  } else {
    if (settings.init_std_per_depth.size() != settings.depths.size())
      throw ValidationError(
          "run_plasticity_protocol: need one init std per depth");
    for (double s : settings.init_std_per_depth)
      if (!(s > 0.0))
        throw ValidationError(
            "run_plasticity_protocol: init_std must be positive");
  }
  const int d = settings.dim;
  const long long cells_total =
      static_cast<long long>(d) * static_cast<long long>(d);
  if (settings.count_post > cells_total)
    throw ValidationError("run_plasticity_protocol: post count exceeds matrix");

  struct Task {
    int depth = 0;
    int trial = 0;
    double init_std = 0.0;
  };
  std::vector<Task> tasks;
  for (std::size_t di = 0; di < settings.depths.size(); ++di) {
    const double std_here = settings.init_std_per_depth.empty()
                                ? settings.init_std
                                : settings.init_std_per_depth[di];
    for (int trial = 0; trial < settings.trials; ++trial)
      tasks.push_back({settings.depths[di], trial, std_here});
  }
  std::vector<PlasticityCell> cells(tasks.size() * 3);

  auto run_task = [&](std::size_t idx) {
    const Task& task = tasks[idx];
    // Nested patterns: the pre set is a prefix of the post set's draw.
    const std::uint64_t obs_seed =
        rng::derive_seed(settings.obs_seed, static_cast<std::uint64_t>(task.trial));
    const std::vector<std::uint64_t> picks = rng::sample_without_replacement(
        obs_seed, static_cast<std::uint64_t>(cells_total),
        static_cast<std::uint64_t>(settings.count_post));
    std::vector<Observation> pre_entries, post_entries;
    for (std::size_t k = 0; k < picks.size(); ++k) {
      const int i = static_cast<int>(picks[k] / d);
      const int j = static_cast<int>(picks[k] % d);
      const Observation e{i, j, settings.truth(i, j)};
      if (k < static_cast<std::size_t>(settings.count_pre))
        pre_entries.push_back(e);
      post_entries.push_back(e);
    }
    const ObservationSet obs_pre(d, std::move(pre_entries));
    const ObservationSet obs_post(d, std::move(post_entries));

    const std::uint64_t init_seed = rng::derive_seed(
        settings.init_seed,
        static_cast<std::uint64_t>(task.trial) * 64u +
            static_cast<std::uint64_t>(task.depth));
    const FactorChain init = build_init(
        InitScheme::gaussian(task.init_std, init_seed), task.depth, d);

    auto fill = [&](std::size_t slot, const char* mode,
                    const Trajectory& traj) {
      PlasticityCell& c = cells[slot];
      c.depth = task.depth;
      c.trial = task.trial;
      c.mode = mode;
      c.final_loss = traj.losses.back();
      const Vector& sv = traj.singular_values.back();
      c.stable_rank = sv(0) > 0.0 ? stable_rank_of_spectrum(sv) : 0.0;
      c.effective_rank = sv(0) > 0.0 ? effective_rank_of_spectrum(sv) : 0.0;
      Matrix prod = traj.final_chain.factors[0];
      for (std::size_t l = 1; l < traj.final_chain.factors.size(); ++l)
        prod = traj.final_chain.factors[l] * prod;
      c.reconstruction_error =
          reconstruction_error(prod, settings.truth, obs_post);
      c.converged = traj.status == RunStatus::Converged;
    };

    IntegratorConfig post_cfg = settings.integrator;
    if (settings.stop_loss_post) post_cfg.stop_loss = *settings.stop_loss_post;
    const Trajectory pre =
        integrate_gradient_flow(init, obs_pre, settings.integrator);
    fill(idx * 3 + 0, "pre", pre);
    const Trajectory warm =
        integrate_gradient_flow(pre.final_chain, obs_post, post_cfg);
    fill(idx * 3 + 1, "warm", warm);
    const Trajectory cold = integrate_gradient_flow(init, obs_post, post_cfg);
    fill(idx * 3 + 2, "cold", cold);
  };

  const int workers =
      std::max(1, std::min<int>(settings.threads,
                                static_cast<int>(tasks.size())));
  if (workers == 1) {
    for (std::size_t idx = 0; idx < tasks.size(); ++idx) run_task(idx);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t idx = next.fetch_add(1);
          if (idx >= tasks.size()) return;
          run_task(idx);
        }
      });
    for (std::thread& t : pool) t.join();
  }
  return cells;
}

int run_experiment(const ExperimentConfig& cfg, const CliOptions& opts) {
  validate_config(cfg);
  switch (cfg.kind) {
    case ExperimentKind::Simulate: return run_simulate(cfg, opts);
    case ExperimentKind::Theory: return run_theory(cfg, opts);
    case ExperimentKind::Coupling: return run_coupling(cfg, opts);
    case ExperimentKind::Plasticity: return run_plasticity(cfg, opts);
    case ExperimentKind::Sweep: return run_sweep(cfg, opts);
  }
  throw std::logic_error("run_experiment: unhandled kind");
}

int run_metrics(const ExperimentConfig& cfg, const CliOptions& opts) {
  if (!cfg.has("dim") || cfg.dim < 1)
    throw ValidationError("metrics: requires dim");
  if (!cfg.has("truth.kind"))
    throw ValidationError("metrics: requires truth.kind");
  Matrix truth;
  if (cfg.truth_kind == "rank_r") {
    if (!cfg.has("truth.rank"))
      throw ValidationError("metrics: rank_r truth requires truth.rank");
    truth = ground_truth_rank_r(cfg.dim, cfg.truth_rank, cfg.truth_seed);
  } else if (cfg.truth_kind == "block_constant") {
    if (!cfg.has("obs.count") || cfg.obs_count < 1 ||
        cfg.dim % cfg.obs_count != 0)
      throw ValidationError(
          "metrics: block_constant truth needs obs.count dividing dim");
    truth = ground_truth_block_constant(
        BlockSpec{cfg.obs_count, cfg.dim / cfg.obs_count, 1.0});
  } else {
    throw ValidationError("metrics: unknown truth.kind '" + cfg.truth_kind + "'");
  }

  const fs::path dir = prepare_out_dir(cfg, opts);
  const Vector sv = spectrum(truth);
  CsvWriter csv(dir / "metrics.csv");
  {
    std::vector<std::string> h;
    for (int k = 1; k <= cfg.dim; ++k)
      h.push_back("sigma_" + std::to_string(k));
    h.insert(h.end(), {"stable_rank", "effective_rank"});
    csv.row(h);
  }
  std::vector<std::string> cells;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    cells.push_back(format_double(sv(i)));
  cells.push_back(format_double(stable_rank_of_spectrum(sv)));
  cells.push_back(format_double(effective_rank_of_spectrum(sv)));
  csv.row(cells);

  json summary;
  summary["kind"] = "metrics";
  summary["dim"] = cfg.dim;
  summary["truth_kind"] = cfg.truth_kind;
  std::ofstream(dir / "summary.json") << summary.dump(2) << "\n";
  return 0;
}

}  // namespace deepfact
