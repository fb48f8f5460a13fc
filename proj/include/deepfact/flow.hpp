// Training dynamics: gradient flow on the factors (RK4 or explicit Euler,
// optionally with backtracking step control), plain gradient descent, and the
// reduced three-eigenvalue dynamics available for block-constant observation
// patterns with equal structured factors.
#pragma once

#include <optional>
#include <vector>

#include "deepfact/block_form.hpp"
#include "deepfact/core.hpp"

namespace deepfact {

enum class IntegrationMethod { RK4, Euler };

struct IntegratorConfig {
  IntegrationMethod method = IntegrationMethod::RK4;
  // Initial step; 0 selects 1e-3 / (1 + ||W_L..W_1(0)||_F^(2 - 2/L)).
  double step = 0.0;
  // Upper bound for step growth; 0 allows growth up to step * 2^40.
  double max_step = 0.0;
  // Backtracking: halve the step while the loss increases (up to
  // max_halvings), and double it again after 8 clean steps.
  bool adaptive = true;
  int max_halvings = 60;
  double t_max = 1e6;
  double stop_loss = 1e-12;
  // Record every record_every-th accepted step (t = 0 and the final state are
  // always recorded).
  int record_every = 10;
  bool record_chains = false;
};

enum class RunStatus {
  Converged,       // loss reached stop_loss
  NonConvergence,  // t_max (or the iteration budget) ran out first
  StepCollapse,    // backtracking pushed the step below 1e-15
};

struct Trajectory {
  std::vector<double> times;
  std::vector<double> losses;
  std::vector<Vector> singular_values;  // of the end-to-end product
  std::vector<double> stable_ranks;     // NaN while the product is zero
  std::vector<double> effective_ranks;  // NaN while the product is zero
  // max over adjacent layers of || (W_{l+1}^T W_{l+1} - W_l W_l^T)(t) -
  // (same)(0) ||_F; identically 0 for depth 1.
  std::vector<double> balance_drift;
  // |q(t) - q(0)| for the depth-dependent conserved quantity of the reduced
  // dynamics; NaN when the run is not in the reduced regime.
  std::vector<double> conserved_drift;
  std::vector<FactorChain> chains;  // filled when record_chains is set
  FactorChain final_chain;
  RunStatus status = RunStatus::Converged;
  bool used_reduced_path = false;
};

// Eigenvalue state of the reduced dynamics: l1 (multiplicity 1), l2
// (multiplicity n-1), l3 (multiplicity n(s-1)) of each factor.
struct EigenState {
  double l1 = 0.0;
  double l2 = 0.0;
  double l3 = 0.0;
};

struct EigenTrajectory {
  std::vector<double> times;
  std::vector<EigenState> states;
  std::vector<double> losses;
  RunStatus status = RunStatus::Converged;
};

// Settings recovered from a chain/observation pair that admits the reduced
// dynamics: complete equal-target diagonal blocks, all factors equal, each
// factor with constant diagonal alpha and constant off-diagonal alpha / m.
struct ReducedRegime {
  BlockSpec spec;
  double alpha = 0.0;
  double m = 2.0;
  bool m_infinite = false;
};

std::optional<ReducedRegime> detect_reduced_regime(const FactorChain& chain,
                                                   const ObservationSet& obs);

double default_initial_step(const FactorChain& chain);

// Integrate dW_l/dt = -grad_l loss from `init`. Runs whose initial state is
// in the reduced regime with alpha^depth <= 1e-10 are routed through the
// eigenvalue dynamics and reported on the same Trajectory interface.
Trajectory integrate_gradient_flow(const FactorChain& init,
                                   const ObservationSet& obs,
                                   const IntegratorConfig& cfg);

struct GDStop {
  long long max_iters = 50'000'000;
  double stop_loss = 1e-12;
};

// Plain gradient descent W_l <- W_l - step_size * grad_l. Reported times are
// iteration * step_size.
Trajectory run_gradient_descent(const FactorChain& init,
                                const ObservationSet& obs, double step_size,
                                const GDStop& stop, int record_every = 1000);

EigenState initial_eigen_state(double alpha, double m, bool m_infinite,
                               const BlockSpec& spec);

// Integrate the reduced dynamics
//   dl1/dt = -gamma l1^(L-1),  dl2/dt = -gamma l2^(L-1),
//   dl3/dt = -l3^(2L-1),
//   gamma = (l1^L + (n-1) l2^L) / n - s w*.
EigenTrajectory integrate_reduced_eigen(const BlockSpec& spec, int depth,
                                        const EigenState& init,
                                        const IntegratorConfig& cfg);

// Exact solution of dl/dt = -l^(2L-1) from l(0) = l0, depth L >= 2.
double lambda3_closed_form(double l0, int depth, double t);

// Loss of the block-constant problem at the given eigenvalue state.
double reduced_loss(const EigenState& state, int depth, const BlockSpec& spec);

// Product singular values at the given eigenvalue state, descending.
Vector reduced_spectrum(const EigenState& state, int depth,
                        const BlockSpec& spec);

// Chain of equal structured factors realizing the eigenvalue state.
FactorChain reduced_chain(const EigenState& state, int depth,
                          const BlockSpec& spec);

// || A^T A - B B^T ||_F for the depth-2 factorization W = A B.
double check_balancedness(const Matrix& outer, const Matrix& inner);

// |q(t) - q(0)| per sample, with q = l1 / l2 for depth 2 and
// q = l1^(2-L) - l2^(2-L) for depth >= 3.
std::vector<double> conserved_quantity_drift(const EigenTrajectory& traj,
                                             int depth);

}  // namespace deepfact
