#include "deepfact/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "deepfact/metrics.hpp"

namespace deepfact {

namespace {

constexpr double kStepFloor = 1e-15;
constexpr double kReducedRouteAlphaPow = 1e-10;
constexpr int kCleanStepsBeforeGrowth = 8;
constexpr double kGrowthCapFactor = 1099511627776.0;  // 2^40

double nan_value() { return std::numeric_limits<double>::quiet_NaN(); }

double ipow(double x, int p) {
  double acc = 1.0;
  double base = x;
  int e = p;
  while (e > 0) {
    if (e & 1) acc *= base;
    base *= base;
    e >>= 1;
  }
  return acc;
}

using ChainState = std::vector<Matrix>;

// Scratch buffers for repeated loss/gradient evaluation on one problem size.
struct GradWorkspace {
  std::vector<Matrix> prefix, suffix;
  Matrix resid, tmp, prod;

  void init(int depth, int d) {
    prefix.assign(depth, Matrix::Zero(d, d));
    suffix.assign(depth, Matrix::Zero(d, d));
    resid = Matrix::Zero(d, d);
    tmp = Matrix::Zero(d, d);
    prod = Matrix::Zero(d, d);
  }
};

double loss_of_state(const ChainState& y, const ObservationSet& obs,
                     GradWorkspace& ws) {
  const int L = static_cast<int>(y.size());
  ws.prod = y[0];
  for (int l = 1; l < L; ++l) {
    ws.tmp.noalias() = y[l] * ws.prod;
    ws.prod.swap(ws.tmp);
  }
  double acc = 0.0;
  for (const Observation& e : obs.entries()) {
    const double r = ws.prod(e.row, e.col) - e.target;
    acc += r * r;
  }
  return 0.5 * acc;
}

// Writes -grad into dydt and returns the loss at y.
double negative_gradients(const ChainState& y, const ObservationSet& obs,
                          GradWorkspace& ws, ChainState& dydt) {
  const int L = static_cast<int>(y.size());
  const int d = static_cast<int>(y[0].rows());
  ws.prefix[0] = Matrix::Identity(d, d);
  for (int l = 1; l < L; ++l)
    ws.prefix[l].noalias() = y[l - 1] * ws.prefix[l - 1];
  ws.suffix[L - 1] = Matrix::Identity(d, d);
  for (int l = L - 2; l >= 0; --l)
    ws.suffix[l].noalias() = ws.suffix[l + 1] * y[l + 1];
  ws.prod.noalias() = y[L - 1] * ws.prefix[L - 1];

  ws.resid.setZero();
  double acc = 0.0;
  for (const Observation& e : obs.entries()) {
    const double r = ws.prod(e.row, e.col) - e.target;
    ws.resid(e.row, e.col) = r;
    acc += r * r;
  }
  for (int l = 0; l < L; ++l) {
    ws.tmp.noalias() = ws.suffix[l].transpose() * ws.resid;
    dydt[l].noalias() = -(ws.tmp * ws.prefix[l].transpose());
  }
  return 0.5 * acc;
}

void set_axpy(ChainState& out, const ChainState& y, double c,
              const ChainState& k) {
  for (std::size_t l = 0; l < y.size(); ++l) out[l] = y[l] + c * k[l];
}

// Collects trajectory samples for chain states, including the balance and
// conserved-quantity diagnostics fixed at the initial state.
class ChainRecorder {
 public:
  ChainRecorder(const ChainState& y0, const ObservationSet& obs,
                bool record_chains, Trajectory& out)
      : out_(out), record_chains_(record_chains) {
    const int L = static_cast<int>(y0.size());
    for (int l = 0; l + 1 < L; ++l)
      balance_base_.push_back(y0[l + 1].transpose() * y0[l + 1] -
                              y0[l] * y0[l].transpose());
    FactorChain chain;
    chain.factors = y0;
    regime_ = detect_reduced_regime(chain, obs);
    if (regime_) {
      depth_ = L;
      q0_ = conserved_quantity(y0);
    }
  }

  void add(const ChainState& y, double t, double loss_val) {
    out_.times.push_back(t);
    out_.losses.push_back(loss_val);
    Matrix prod = y[0];
    for (std::size_t l = 1; l < y.size(); ++l) prod = y[l] * prod;
    Vector sv = spectrum(prod);
    if (sv(0) == 0.0) {
      out_.stable_ranks.push_back(nan_value());
      out_.effective_ranks.push_back(nan_value());
    } else {
      out_.stable_ranks.push_back(stable_rank_of_spectrum(sv));
      out_.effective_ranks.push_back(effective_rank_of_spectrum(sv));
    }
    out_.singular_values.push_back(std::move(sv));
    double drift = 0.0;
    for (std::size_t l = 0; l + 1 < y.size(); ++l) {
      const Matrix d =
          y[l + 1].transpose() * y[l + 1] - y[l] * y[l].transpose();
      drift = std::max(drift, (d - balance_base_[l]).norm());
    }
    out_.balance_drift.push_back(drift);
    out_.conserved_drift.push_back(
        regime_ ? std::abs(conserved_quantity(y) - q0_) : nan_value());
    if (record_chains_) {
      FactorChain chain;
      chain.factors = y;
      out_.chains.push_back(std::move(chain));
    }
    last_t_ = t;
  }

  bool recorded(double t) const {
    return !out_.times.empty() && last_t_ == t;
  }

 private:
  // Average the entry classes of the first factor and evaluate the
  // depth-dependent invariant built from the two leading eigenvalues.
  double conserved_quantity(const ChainState& y) const {
    const int s = regime_->spec.block_size;
    const int n = regime_->spec.num_blocks;
    const Matrix& w = y[0];
    double diag = 0.0, inner = 0.0, cross = 0.0;
    long inner_count = 0, cross_count = 0;
    const int d = s * n;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        if (i == j) {
          diag += w(i, j);
        } else if (i / s == j / s) {
          inner += w(i, j);
          ++inner_count;
        } else {
          cross += w(i, j);
          ++cross_count;
        }
      }
    diag /= d;
    if (inner_count > 0) inner /= static_cast<double>(inner_count);
    if (cross_count > 0) cross /= static_cast<double>(cross_count);
    const BlockEigen e =
        block_form_eigenvalues({diag, inner, cross}, s, n);
    if (depth_ == 2) return e.l1 / e.l2;
    return std::pow(e.l1, 2 - depth_) - std::pow(e.l2, 2 - depth_);
  }

  Trajectory& out_;
  bool record_chains_ = false;
  std::vector<Matrix> balance_base_;
  std::optional<ReducedRegime> regime_;
  int depth_ = 0;
  double q0_ = 0.0;
  double last_t_ = -1.0;
};

}  // namespace

std::optional<ReducedRegime> detect_reduced_regime(const FactorChain& chain,
                                                   const ObservationSet& obs) {
  chain.validate();
  if (obs.empty() || chain.dim() != obs.dim()) return std::nullopt;
  const int d = chain.dim();
  for (std::size_t l = 1; l < chain.factors.size(); ++l)
    if (chain.factors[l] != chain.factors[0]) return std::nullopt;

  const double target = obs.entries()[0].target;
  if (!(target > 0.0)) return std::nullopt;
  for (int s = 1; s <= d; ++s) {
    if (d % s != 0) continue;
    const int n = d / s;
    if (n < 2) continue;
    if (obs.size() != static_cast<std::size_t>(n) * s * s) continue;
    BlockSpec spec{s, n, target};
    const ObservationSet want = build_observation_block(spec);
    bool same = true;
    for (std::size_t k = 0; k < obs.size() && same; ++k) {
      const Observation& a = obs.entries()[k];
      const Observation& b = want.entries()[k];
      same = a.row == b.row && a.col == b.col && a.target == b.target;
    }
    if (!same) continue;
    std::optional<BlockForm> f = match_block_form(chain.factors[0], s, n, 0.0);
    if (!f) return std::nullopt;
    if (s == 1) f->inner = f->cross;
    if (f->inner != f->cross) return std::nullopt;
    if (!(f->diag > 0.0) || f->cross < 0.0 || f->cross >= f->diag)
      return std::nullopt;
    ReducedRegime regime;
    regime.spec = spec;
    regime.alpha = f->diag;
    if (f->cross == 0.0) {
      regime.m_infinite = true;
    } else {
      regime.m = f->diag / f->cross;
    }
    return regime;
  }
  return std::nullopt;
}

double default_initial_step(const FactorChain& chain) {
  chain.validate();
  const double L = static_cast<double>(chain.depth());
  Matrix prod = chain.factors[0];
  for (std::size_t l = 1; l < chain.factors.size(); ++l)
    prod = chain.factors[l] * prod;
  return 1e-3 / (1.0 + std::pow(prod.norm(), 2.0 - 2.0 / L));
}

double lambda3_closed_form(double l0, int depth, double t) {
  if (depth < 2) throw ValidationError("lambda3_closed_form: depth < 2");
  if (l0 == 0.0) return 0.0;
  const double p = 2.0 * depth - 2.0;
  const double base = std::pow(std::abs(l0), -p) + p * t;
  const double mag = std::pow(base, -1.0 / p);
  return l0 > 0.0 ? mag : -mag;
}

EigenState initial_eigen_state(double alpha, double m, bool m_infinite,
                               const BlockSpec& spec) {
  spec.validate();
  if (!(alpha > 0.0)) throw ValidationError("initial_eigen_state: alpha <= 0");
  if (!m_infinite && !(m > 1.0))
    throw ValidationError("initial_eigen_state: requires m > 1");
  const double off = m_infinite ? 0.0 : alpha / m;
  const BlockEigen e = block_form_eigenvalues(
      {alpha, off, off}, spec.block_size, spec.num_blocks);
  return {e.l1, e.l2, e.l3};
}

double reduced_loss(const EigenState& state, int depth, const BlockSpec& spec) {
  const int s = spec.block_size;
  const int n = spec.num_blocks;
  const BlockEigen mu{ipow(state.l1, depth), ipow(state.l2, depth),
                      ipow(state.l3, depth)};
  const BlockForm prod = block_form_from_eigenvalues(mu, s, n);
  const double da = prod.diag - spec.target;
  const double db = prod.inner - spec.target;
  return 0.5 * n * (s * da * da + static_cast<double>(s) * (s - 1) * db * db);
}

Vector reduced_spectrum(const EigenState& state, int depth,
                        const BlockSpec& spec) {
  const int s = spec.block_size;
  const int n = spec.num_blocks;
  std::vector<double> sv;
  sv.push_back(std::abs(ipow(state.l1, depth)));
  for (int k = 1; k < n; ++k) sv.push_back(std::abs(ipow(state.l2, depth)));
  for (int k = 0; k < n * (s - 1); ++k)
    sv.push_back(std::abs(ipow(state.l3, depth)));
  std::sort(sv.begin(), sv.end(), std::greater<double>());
  Vector out(static_cast<Eigen::Index>(sv.size()));
  for (std::size_t k = 0; k < sv.size(); ++k)
    out(static_cast<Eigen::Index>(k)) = sv[k];
  return out;
}

FactorChain reduced_chain(const EigenState& state, int depth,
                          const BlockSpec& spec) {
  const BlockForm f = block_form_from_eigenvalues(
      {state.l1, state.l2, state.l3}, spec.block_size, spec.num_blocks);
  FactorChain chain;
  const Matrix w = block_form_matrix(f, spec.block_size, spec.num_blocks);
  chain.factors.assign(depth, w);
  return chain;
}

double check_balancedness(const Matrix& outer, const Matrix& inner) {
  if (outer.rows() != inner.rows() || outer.cols() != inner.cols())
    throw DimensionError("check_balancedness: shape mismatch");
  return (outer.transpose() * outer - inner * inner.transpose()).norm();
}

std::vector<double> conserved_quantity_drift(const EigenTrajectory& traj,
                                             int depth) {
  if (depth < 2)
    throw ValidationError("conserved_quantity_drift: depth < 2");
  std::vector<double> drift;
  drift.reserve(traj.states.size());
  if (traj.states.empty()) return drift;
  auto q = [depth](const EigenState& e) {
    if (depth == 2) return e.l1 / e.l2;
    return std::pow(e.l1, 2 - depth) - std::pow(e.l2, 2 - depth);
  };
  const double q0 = q(traj.states[0]);
  for (const EigenState& e : traj.states) drift.push_back(std::abs(q(e) - q0));
  return drift;
}

EigenTrajectory integrate_reduced_eigen(const BlockSpec& spec, int depth,
                                        const EigenState& init,
                                        const IntegratorConfig& cfg) {
  spec.validate();
  if (depth < 2) throw ValidationError("integrate_reduced_eigen: depth < 2");
  const int n = spec.num_blocks;
  const double s = spec.block_size;
  const double w_star = spec.target;

  auto rhs = [&](const EigenState& y, EigenState& dydt) {
    const double gamma =
        (ipow(y.l1, depth) + (n - 1) * ipow(y.l2, depth)) / n - s * w_star;
    dydt.l1 = -gamma * ipow(y.l1, depth - 1);
    dydt.l2 = -gamma * ipow(y.l2, depth - 1);
    dydt.l3 = -ipow(y.l3, 2 * depth - 1);
  };
  auto loss_fn = [&](const EigenState& y) {
    return reduced_loss(y, depth, spec);
  };
  auto euler = [&](const EigenState& y, double h, EigenState& out) {
    EigenState k;
    rhs(y, k);
    out = {y.l1 + h * k.l1, y.l2 + h * k.l2, y.l3 + h * k.l3};
  };
  auto rk4 = [&](const EigenState& y, double h, EigenState& out) {
    EigenState k1, k2, k3, k4, t;
    rhs(y, k1);
    t = {y.l1 + 0.5 * h * k1.l1, y.l2 + 0.5 * h * k1.l2,
         y.l3 + 0.5 * h * k1.l3};
    rhs(t, k2);
    t = {y.l1 + 0.5 * h * k2.l1, y.l2 + 0.5 * h * k2.l2,
         y.l3 + 0.5 * h * k2.l3};
    rhs(t, k3);
    t = {y.l1 + h * k3.l1, y.l2 + h * k3.l2, y.l3 + h * k3.l3};
    rhs(t, k4);
    const double c = h / 6.0;
    out = {y.l1 + c * (k1.l1 + 2 * k2.l1 + 2 * k3.l1 + k4.l1),
           y.l2 + c * (k1.l2 + 2 * k2.l2 + 2 * k3.l2 + k4.l2),
           y.l3 + c * (k1.l3 + 2 * k2.l3 + 2 * k3.l3 + k4.l3)};
  };

  EigenTrajectory traj;
  EigenState y = init;
  double l = loss_fn(y);
  double t = 0.0;
  auto record = [&](double time, double loss_val) {
    traj.times.push_back(time);
    traj.states.push_back(y);
    traj.losses.push_back(loss_val);
  };
  record(0.0, l);

  double h = cfg.step;
  if (h <= 0.0) {
    FactorChain c0 = reduced_chain(init, depth, spec);
    h = default_initial_step(c0);
  }
  const double cap =
      cfg.max_step > 0.0 ? cfg.max_step : h * kGrowthCapFactor;
  const int record_every = std::max(1, cfg.record_every);
  long long accepted = 0;
  int clean = 0;
  traj.status = RunStatus::NonConvergence;
  while (t < cfg.t_max) {
    if (l <= cfg.stop_loss) {
      traj.status = RunStatus::Converged;
      break;
    }
    double h_eff = std::min(h, cfg.t_max - t);
    EigenState y_new;
    double l_new = 0.0;
    int halvings = 0;
    bool ok = false;
    for (;;) {
      if (cfg.method == IntegrationMethod::RK4) {
        rk4(y, h_eff, y_new);
      } else {
        euler(y, h_eff, y_new);
      }
      l_new = loss_fn(y_new);
      const double slack = 1e-12 * (1.0 + l);
      if (std::isfinite(l_new) && l_new <= l + slack) {
        ok = true;
        break;
      }
      if (!cfg.adaptive || halvings >= cfg.max_halvings) break;
      h_eff *= 0.5;
      ++halvings;
      if (h_eff < kStepFloor) break;
    }
    if (!ok) {
      if (!cfg.adaptive) {
        // Fixed-step mode accepts the step as computed.
        ok = true;
      } else {
        traj.status = RunStatus::StepCollapse;
        break;
      }
    }
    y = y_new;
    l = l_new;
    t += h_eff;
    ++accepted;
    if (halvings > 0) {
      h = h_eff;
      clean = 0;
    } else if (cfg.adaptive && ++clean >= kCleanStepsBeforeGrowth) {
      h = std::min(h * 2.0, cap);
      clean = 0;
    }
    if (accepted % record_every == 0) record(t, l);
  }
  if (l <= cfg.stop_loss && traj.status == RunStatus::NonConvergence)
    traj.status = RunStatus::Converged;
  if (traj.times.back() != t) record(t, l);
  return traj;
}

namespace {

Trajectory trajectory_from_eigen(const EigenTrajectory& etraj,
                                 const ReducedRegime& regime, int depth,
                                 bool record_chains) {
  Trajectory traj;
  traj.used_reduced_path = true;
  traj.status = etraj.status;
  const std::vector<double> drift = conserved_quantity_drift(etraj, depth);
  for (std::size_t k = 0; k < etraj.states.size(); ++k) {
    const EigenState& e = etraj.states[k];
    traj.times.push_back(etraj.times[k]);
    traj.losses.push_back(etraj.losses[k]);
    Vector sv = reduced_spectrum(e, depth, regime.spec);
    if (sv(0) == 0.0) {
      traj.stable_ranks.push_back(nan_value());
      traj.effective_ranks.push_back(nan_value());
    } else {
      traj.stable_ranks.push_back(stable_rank_of_spectrum(sv));
      traj.effective_ranks.push_back(effective_rank_of_spectrum(sv));
    }
    traj.singular_values.push_back(std::move(sv));
    // Equal symmetric factors commute with themselves; the layer grams agree
    // exactly along the whole path.
    traj.balance_drift.push_back(0.0);
    traj.conserved_drift.push_back(drift[k]);
    if (record_chains)
      traj.chains.push_back(reduced_chain(e, depth, regime.spec));
  }
  traj.final_chain = reduced_chain(etraj.states.back(), depth, regime.spec);
  return traj;
}

}  // namespace

Trajectory integrate_gradient_flow(const FactorChain& init,
                                   const ObservationSet& obs,
                                   const IntegratorConfig& cfg) {
  init.validate();
  if (obs.empty())
    throw ValidationError("integrate_gradient_flow: empty observation set");
  if (init.dim() != obs.dim())
    throw DimensionError("integrate_gradient_flow: chain/observation dim mismatch");
  const int L = init.depth();
  const int d = init.dim();

  const std::optional<ReducedRegime> regime = detect_reduced_regime(init, obs);
  if (regime && ipow(regime->alpha, L) <= kReducedRouteAlphaPow) {
    const EigenState e0 = initial_eigen_state(regime->alpha, regime->m,
                                              regime->m_infinite, regime->spec);
    const EigenTrajectory etraj =
        integrate_reduced_eigen(regime->spec, L, e0, cfg);
    return trajectory_from_eigen(etraj, *regime, L, cfg.record_chains);
  }

  Trajectory traj;
  GradWorkspace ws;
  ws.init(L, d);
  ChainState y = init.factors;
  ChainRecorder recorder(y, obs, cfg.record_chains, traj);

  ChainState k1 = y, k2 = y, k3 = y, k4 = y, stage = y, y_new = y;
  double l = loss_of_state(y, obs, ws);
  double t = 0.0;
  recorder.add(y, 0.0, l);

  double h = cfg.step > 0.0 ? cfg.step : default_initial_step(init);
  const double cap = cfg.max_step > 0.0 ? cfg.max_step : h * kGrowthCapFactor;
  const int record_every = std::max(1, cfg.record_every);
  long long accepted = 0;
  int clean = 0;
  traj.status = RunStatus::NonConvergence;
  bool collapsed = false;
  while (t < cfg.t_max) {
    if (l <= cfg.stop_loss) {
      traj.status = RunStatus::Converged;
      break;
    }
    double h_eff = std::min(h, cfg.t_max - t);
    negative_gradients(y, obs, ws, k1);  // stage independent of h, reusable
    double l_new = 0.0;
    int halvings = 0;
    bool ok = false;
    for (;;) {
      if (cfg.method == IntegrationMethod::RK4) {
        set_axpy(stage, y, 0.5 * h_eff, k1);
        negative_gradients(stage, obs, ws, k2);
        set_axpy(stage, y, 0.5 * h_eff, k2);
        negative_gradients(stage, obs, ws, k3);
        set_axpy(stage, y, h_eff, k3);
        negative_gradients(stage, obs, ws, k4);
        for (std::size_t i = 0; i < y.size(); ++i)
          y_new[i] = y[i] + (h_eff / 6.0) *
                                (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      } else {
        set_axpy(y_new, y, h_eff, k1);
      }
      l_new = loss_of_state(y_new, obs, ws);
      const double slack = 1e-12 * (1.0 + l);
      if (std::isfinite(l_new) && l_new <= l + slack) {
        ok = true;
        break;
      }
      if (!cfg.adaptive || halvings >= cfg.max_halvings) break;
      h_eff *= 0.5;
      ++halvings;
      if (h_eff < kStepFloor) break;
    }
    if (!ok) {
      if (!cfg.adaptive) {
        ok = true;
      } else {
        traj.status = RunStatus::StepCollapse;
        collapsed = true;
        break;
      }
    }
    y.swap(y_new);
    l = l_new;
    t += h_eff;
    ++accepted;
    if (halvings > 0) {
      h = h_eff;
      clean = 0;
    } else if (cfg.adaptive && ++clean >= kCleanStepsBeforeGrowth) {
      h = std::min(h * 2.0, cap);
      clean = 0;
    }
    if (accepted % record_every == 0) recorder.add(y, t, l);
  }
  if (l <= cfg.stop_loss && traj.status == RunStatus::NonConvergence &&
      !collapsed)
    traj.status = RunStatus::Converged;
  if (!recorder.recorded(t)) recorder.add(y, t, l);
  traj.final_chain.factors = y;
  return traj;
}

Trajectory run_gradient_descent(const FactorChain& init,
                                const ObservationSet& obs, double step_size,
                                const GDStop& stop, int record_every) {
  init.validate();
  if (obs.empty())
    throw ValidationError("run_gradient_descent: empty observation set");
  if (init.dim() != obs.dim())
    throw DimensionError("run_gradient_descent: chain/observation dim mismatch");
  if (!(step_size > 0.0))
    throw ValidationError("run_gradient_descent: step_size <= 0");
  if (record_every < 1) record_every = 1;
  const int L = init.depth();
  const int d = init.dim();

  Trajectory traj;
  GradWorkspace ws;
  ws.init(L, d);
  ChainState y = init.factors;
  ChainState grad = y;
  ChainRecorder recorder(y, obs, false, traj);
  double l = loss_of_state(y, obs, ws);
  recorder.add(y, 0.0, l);
  traj.status = RunStatus::NonConvergence;
  long long it = 0;
  double t = 0.0;
  while (it < stop.max_iters) {
    if (l <= stop.stop_loss) {
      traj.status = RunStatus::Converged;
      break;
    }
    l = negative_gradients(y, obs, ws, grad);
    if (l <= stop.stop_loss) {
      traj.status = RunStatus::Converged;
      break;
    }
    for (int i = 0; i < L; ++i) y[i] += step_size * grad[i];
    ++it;
    t = static_cast<double>(it) * step_size;
    if (it % record_every == 0) {
      l = loss_of_state(y, obs, ws);
      recorder.add(y, t, l);
      if (!std::isfinite(l)) break;
    }
  }
  l = loss_of_state(y, obs, ws);
  if (l <= stop.stop_loss) traj.status = RunStatus::Converged;
  if (!recorder.recorded(t)) recorder.add(y, t, l);
  traj.final_chain.factors = y;
  return traj;
}

}  // namespace deepfact
