#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "deepfact/core.hpp"
#include "deepfact/flow.hpp"
#include "deepfact/metrics.hpp"

using namespace deepfact;

namespace {

// Independent fixed-step RK4 oracle for the scalar decay dl/dt = -l^(2L-1).
double rk4_scalar_decay(double l0, int depth, double t_end, double h) {
  const int p = 2 * depth - 1;
  auto f = [p](double x) {
    double acc = 1.0;
    for (int k = 0; k < p; ++k) acc *= x;
    return -acc;
  };
  double y = l0;
  double t = 0.0;
  while (t < t_end) {
    const double step = std::min(h, t_end - t);
    const double k1 = f(y);
    const double k2 = f(y + 0.5 * step * k1);
    const double k3 = f(y + 0.5 * step * k2);
    const double k4 = f(y + step * k3);
    y += (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4);
    t += step;
  }
  return y;
}

void check_parallel_sizes(const Trajectory& traj) {
  const std::size_t n = traj.times.size();
  REQUIRE(n >= 2);
  CHECK(traj.losses.size() == n);
  CHECK(traj.singular_values.size() == n);
  CHECK(traj.stable_ranks.size() == n);
  CHECK(traj.effective_ranks.size() == n);
  CHECK(traj.balance_drift.size() == n);
  CHECK(traj.conserved_drift.size() == n);
}

}  // namespace

TEST_CASE("reduced-regime detection recovers the structured start") {
  const FactorChain chain = build_init(InitScheme::alpha_m(0.1, 5.0), 3, 4);
  const ObservationSet obs = build_observation_block(BlockSpec{2, 2, 1.0});
  const auto regime = detect_reduced_regime(chain, obs);
  REQUIRE(regime.has_value());
  CHECK(regime->spec.block_size == 2);
  CHECK(regime->spec.num_blocks == 2);
  CHECK(regime->spec.target == 1.0);
  CHECK(regime->alpha == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(regime->m == doctest::Approx(5.0).epsilon(1e-12));
  CHECK_FALSE(regime->m_infinite);
}

TEST_CASE("reduced-regime detection handles diagonal blocks and identity") {
  const FactorChain chain = build_init(InitScheme::alpha_m(0.4, 2.0), 2, 3);
  const ObservationSet obs = build_observation_block(BlockSpec{1, 3, 2.0});
  const auto regime = detect_reduced_regime(chain, obs);
  REQUIRE(regime.has_value());
  CHECK(regime->spec.block_size == 1);
  CHECK(regime->spec.num_blocks == 3);
  CHECK(regime->m == doctest::Approx(2.0).epsilon(1e-12));

  const FactorChain id = build_init(InitScheme::identity(0.2), 4, 3);
  const auto regime2 = detect_reduced_regime(id, obs);
  REQUIRE(regime2.has_value());
  CHECK(regime2->m_infinite);
  CHECK(regime2->alpha == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("reduced-regime detection rejects off-family situations") {
  const ObservationSet obs = build_observation_block(BlockSpec{1, 3, 1.0});
  // Unequal factors.
  FactorChain uneq = build_init(InitScheme::identity(0.5), 2, 3);
  uneq.factors[1](0, 0) = 0.6;
  CHECK_FALSE(detect_reduced_regime(uneq, obs).has_value());
  // Dense unstructured factors.
  const FactorChain dense = build_init(InitScheme::gaussian(0.5, 2), 2, 3);
  CHECK_FALSE(detect_reduced_regime(dense, obs).has_value());
  // Off-diagonal exceeding the diagonal.
  const FactorChain ones = build_init(InitScheme::all_ones(0.5), 2, 3);
  CHECK_FALSE(detect_reduced_regime(ones, obs).has_value());
  // Observation pattern that is not a complete block family.
  ObservationSet partial(3, {{0, 0, 1.0}, {1, 1, 1.0}});
  const FactorChain id = build_init(InitScheme::identity(0.5), 2, 3);
  CHECK_FALSE(detect_reduced_regime(id, partial).has_value());
  // Non-positive shared target.
  ObservationSet neg(3, {{0, 0, -1.0}, {1, 1, -1.0}, {2, 2, -1.0}});
  CHECK_FALSE(detect_reduced_regime(id, neg).has_value());
}

TEST_CASE("scalar decay closed form matches an independent integration") {
  for (int depth : {2, 3, 4}) {
    const double got = lambda3_closed_form(0.8, depth, 2.0);
    const double want = rk4_scalar_decay(0.8, depth, 2.0, 1e-4);
    CAPTURE(depth);
    CHECK(got == doctest::Approx(want).epsilon(1e-8));
  }
  CHECK(lambda3_closed_form(-0.8, 3, 2.0) ==
        doctest::Approx(-lambda3_closed_form(0.8, 3, 2.0)).epsilon(1e-14));
  CHECK(lambda3_closed_form(0.0, 3, 5.0) == 0.0);
  CHECK_THROWS_AS(lambda3_closed_form(0.5, 1, 1.0), ValidationError);
}

TEST_CASE("initial eigenvalues of the structured start") {
  const BlockSpec spec{2, 2, 1.0};
  const EigenState e = initial_eigen_state(0.6, 3.0, false, spec);
  // d = 4, m = 3: leading (m + d - 1)/m, others (m - 1)/m, times alpha.
  CHECK(e.l1 == doctest::Approx(0.6 * 6.0 / 3.0).epsilon(1e-14));
  CHECK(e.l2 == doctest::Approx(0.6 * 2.0 / 3.0).epsilon(1e-14));
  CHECK(e.l3 == doctest::Approx(0.6 * 2.0 / 3.0).epsilon(1e-14));
  const EigenState inf = initial_eigen_state(0.6, 2.0, true, spec);
  CHECK(inf.l1 == 0.6);
  CHECK(inf.l2 == 0.6);
  CHECK(inf.l3 == 0.6);
  CHECK_THROWS_AS(initial_eigen_state(-1.0, 2.0, false, spec),
                  ValidationError);
  CHECK_THROWS_AS(initial_eigen_state(0.5, 1.0, false, spec),
                  ValidationError);
}

TEST_CASE("reduced loss and spectrum agree with the dense chain they encode") {
  const BlockSpec spec{2, 2, 1.0};
  const EigenState state{0.9, 0.3, 0.2};
  for (int depth : {2, 3}) {
    const FactorChain chain = reduced_chain(state, depth, spec);
    const ObservationSet obs = build_observation_block(spec);
    CAPTURE(depth);
    CHECK(reduced_loss(state, depth, spec) ==
          doctest::Approx(loss(chain, obs)).epsilon(1e-12));
    const Vector direct = spectrum(product(chain));
    const Vector reduced = reduced_spectrum(state, depth, spec);
    REQUIRE(direct.size() == reduced.size());
    for (Eigen::Index k = 0; k < direct.size(); ++k)
      CHECK(direct(k) == doctest::Approx(reduced(k)).epsilon(1e-10));
  }
}

TEST_CASE("full and reduced integrations agree on the same fixed grid") {
  const BlockSpec spec{2, 2, 1.0};
  const ObservationSet obs = build_observation_block(spec);
  const FactorChain init = build_init(InitScheme::alpha_m(0.25, 4.0), 3, 4);

  IntegratorConfig cfg;
  cfg.method = IntegrationMethod::RK4;
  cfg.adaptive = false;
  cfg.step = 1e-3;
  cfg.t_max = 2.0;
  cfg.stop_loss = 0.0;
  cfg.record_every = 200;

  const Trajectory full = integrate_gradient_flow(init, obs, cfg);
  CHECK_FALSE(full.used_reduced_path);  // alpha^3 is far above the routing cut
  const EigenState e0 = initial_eigen_state(0.25, 4.0, false, spec);
  const EigenTrajectory reduced = integrate_reduced_eigen(spec, 3, e0, cfg);

  REQUIRE(full.times.size() == reduced.times.size());
  for (std::size_t k = 0; k < full.times.size(); ++k) {
    CAPTURE(k);
    CHECK(full.times[k] == doctest::Approx(reduced.times[k]).epsilon(1e-12));
    CHECK(full.losses[k] ==
          doctest::Approx(reduced.losses[k]).epsilon(1e-8));
    const Vector want = reduced_spectrum(reduced.states[k], 3, spec);
    const Vector& got = full.singular_values[k];
    REQUIRE(got.size() == want.size());
    for (Eigen::Index i = 0; i < got.size(); ++i)
      CHECK(got(i) == doctest::Approx(want(i)).epsilon(1e-8));
  }
  // The full integration moved: this is not a stationary comparison.
  CHECK(full.losses.front() > 2.0 * full.losses.back());
}

TEST_CASE("tiny structured starts are routed through the reduced dynamics") {
  const BlockSpec spec{1, 3, 1.0};
  const ObservationSet obs = build_observation_block(spec);
  const FactorChain tiny = build_init(InitScheme::alpha_m(1e-4, 3.0), 3, 3);
  IntegratorConfig cfg;
  cfg.t_max = 1e6;
  const Trajectory traj = integrate_gradient_flow(tiny, obs, cfg);
  CHECK(traj.used_reduced_path);
  CHECK(traj.status == RunStatus::Converged);
  CHECK(traj.losses.back() <= 1e-12);
  // Every product eigenvalue lands on the observed targets: trace preserved.
  const Vector sv = traj.singular_values.back();
  CHECK(sv.sum() == doctest::Approx(3.0).epsilon(1e-5));

  const FactorChain big = build_init(InitScheme::alpha_m(0.25, 3.0), 3, 3);
  cfg.t_max = 1.0;
  CHECK_FALSE(integrate_gradient_flow(big, obs, cfg).used_reduced_path);
}

TEST_CASE("the two-eigenvalue invariant is conserved along the reduced flow") {
  const BlockSpec spec{1, 3, 1.0};
  const EigenState e0 = initial_eigen_state(0.01, 3.0, false, spec);
  IntegratorConfig cfg;
  cfg.method = IntegrationMethod::RK4;
  cfg.adaptive = false;
  cfg.step = 1e-3;
  cfg.t_max = 500.0;
  cfg.stop_loss = 1e-12;
  cfg.record_every = 1000;
  const EigenTrajectory traj = integrate_reduced_eigen(spec, 3, e0, cfg);
  CHECK(traj.status == RunStatus::Converged);
  const double q0 = 1.0 / e0.l1 - 1.0 / e0.l2;
  const std::vector<double> drift = conserved_quantity_drift(traj, 3);
  double max_drift = 0.0;
  for (double v : drift) max_drift = std::max(max_drift, v);
  CHECK(max_drift <= 1e-6 * (1.0 + std::abs(q0)));
  CHECK_THROWS_AS(conserved_quantity_drift(traj, 1), ValidationError);
}

TEST_CASE("adaptive integration keeps recorded losses non-increasing") {
  const FactorChain init = build_init(InitScheme::gaussian(0.5, 19), 3, 3);
  ObservationSet obs(3, {{0, 0, 1.0}, {0, 2, -0.5}, {1, 1, 0.75}, {2, 0, 0.25}});
  IntegratorConfig cfg;
  cfg.t_max = 50.0;
  cfg.stop_loss = 1e-13;
  cfg.max_step = 0.05;
  cfg.record_every = 5;
  const Trajectory traj = integrate_gradient_flow(init, obs, cfg);
  check_parallel_sizes(traj);
  CHECK(traj.times.front() == 0.0);
  for (std::size_t k = 1; k < traj.times.size(); ++k) {
    CHECK(traj.times[k] > traj.times[k - 1]);
    CHECK(traj.losses[k] <= traj.losses[k - 1] + 1e-9);
  }
  CHECK(traj.status == RunStatus::Converged);
  // Gradient flow preserves the layer balance; the capped-step integration
  // must track that conservation tightly.
  double max_balance = 0.0;
  for (double v : traj.balance_drift) max_balance = std::max(max_balance, v);
  CHECK(max_balance <= 1e-6);
  // Unstructured start: the reduced invariant does not apply.
  CHECK(std::isnan(traj.conserved_drift.back()));
}

TEST_CASE("a stationary zero start reports NaN rank metrics") {
  FactorChain zero{{Matrix::Zero(2, 2), Matrix::Zero(2, 2)}};
  ObservationSet obs(2, {{0, 0, 1.0}});
  IntegratorConfig cfg;
  cfg.t_max = 1.0;
  cfg.stop_loss = 1e-12;
  const Trajectory traj = integrate_gradient_flow(zero, obs, cfg);
  CHECK(traj.status == RunStatus::NonConvergence);
  CHECK(std::isnan(traj.stable_ranks.back()));
  CHECK(std::isnan(traj.effective_ranks.back()));
  CHECK(traj.losses.back() == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("status reporting: budget exhaustion and step collapse") {
  const FactorChain init = build_init(InitScheme::identity(0.5), 2, 2);
  const ObservationSet obs = build_observation_block(BlockSpec{1, 2, 1.0});
  IntegratorConfig short_cfg;
  short_cfg.t_max = 1e-4;
  short_cfg.stop_loss = 0.0;
  CHECK(integrate_gradient_flow(init, obs, short_cfg).status ==
        RunStatus::NonConvergence);

  // One huge Euler step overshoots; with no halvings allowed the run stops.
  FactorChain scalar{{Matrix::Constant(1, 1, 2.0)}};
  ObservationSet one(1, {{0, 0, 0.0}});
  IntegratorConfig harsh;
  harsh.method = IntegrationMethod::Euler;
  harsh.step = 3.0;
  harsh.max_halvings = 0;
  harsh.t_max = 10.0;
  CHECK(integrate_gradient_flow(scalar, one, harsh).status ==
        RunStatus::StepCollapse);

  // With backtracking allowed the same start converges.
  IntegratorConfig patient = harsh;
  patient.max_halvings = 60;
  const Trajectory ok = integrate_gradient_flow(scalar, one, patient);
  CHECK(ok.status == RunStatus::Converged);
}

TEST_CASE("default initial step scales with the product norm") {
  const FactorChain id = build_init(InitScheme::identity(1.0), 2, 2);
  CHECK(default_initial_step(id) ==
        doctest::Approx(1e-3 / (1.0 + std::sqrt(2.0))).epsilon(1e-12));
}

TEST_CASE("gradient descent matches fixed-step explicit Euler") {
  const FactorChain init = build_init(InitScheme::gaussian(0.6, 31), 2, 3);
  ObservationSet obs(3, {{0, 0, 1.0}, {1, 2, -0.5}, {2, 1, 0.75}});
  const double h = 1e-2;

  GDStop stop;
  stop.max_iters = 20000;
  stop.stop_loss = 1e-12;
  const Trajectory gd = run_gradient_descent(init, obs, h, stop, 500);

  IntegratorConfig cfg;
  cfg.method = IntegrationMethod::Euler;
  cfg.adaptive = false;
  cfg.step = h;
  cfg.t_max = 20000 * h;
  cfg.stop_loss = 1e-12;
  cfg.record_every = 500;
  const Trajectory euler = integrate_gradient_flow(init, obs, cfg);

  CHECK(gd.status == RunStatus::Converged);
  CHECK(euler.status == RunStatus::Converged);
  CHECK(gd.losses.back() ==
        doctest::Approx(euler.losses.back()).epsilon(1e-6));
  const Matrix pg = product(gd.final_chain);
  const Matrix pe = product(euler.final_chain);
  CHECK((pg - pe).norm() <= 1e-8 * (1.0 + pe.norm()));
  CHECK_THROWS_AS(run_gradient_descent(init, obs, 0.0, stop), ValidationError);
}

TEST_CASE("recording always includes the start and the final state") {
  const FactorChain init = build_init(InitScheme::identity(0.5), 2, 2);
  const ObservationSet obs = build_observation_block(BlockSpec{1, 2, 1.0});
  IntegratorConfig cfg;
  cfg.record_every = 1000000;
  cfg.t_max = 100.0;
  cfg.stop_loss = 1e-12;
  cfg.record_chains = true;
  const Trajectory traj = integrate_gradient_flow(init, obs, cfg);
  check_parallel_sizes(traj);
  CHECK(traj.chains.size() == traj.times.size());
  CHECK(traj.times.front() == 0.0);
  CHECK(traj.losses.back() <= 1e-12);
  CHECK(traj.times.back() > 0.0);
  // Final chain reproduces the final recorded loss.
  CHECK(loss(traj.final_chain, obs) ==
        doctest::Approx(traj.losses.back()).epsilon(1e-10));
  // Converged depth-2 diagonal completion: both singular values reach 1.
  const Vector sv = traj.singular_values.back();
  CHECK(sv(0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(sv(1) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("balancedness measure is a plain matrix identity") {
  Matrix a = Matrix::Zero(2, 2);
  a.diagonal() << 1.0, 2.0;
  CHECK(check_balancedness(a, Matrix::Identity(2, 2)) ==
        doctest::Approx(3.0).epsilon(1e-14));
  CHECK_THROWS_AS(check_balancedness(a, Matrix::Identity(3, 3)),
                  DimensionError);
}
