// Closed-form and implicitly defined predictions for the limits of gradient
// flow on block-constant completion problems, the depth-2 closed form for
// permutation observation patterns, and bounds for warm-started training in
// the lazy regime.
#pragma once

#include <string>
#include <vector>

#include "deepfact/core.hpp"
#include "deepfact/flow.hpp"

namespace deepfact {

enum class LimitBranch {
  ClosedFormL2,        // depth 2, finite m
  Implicit,            // depth >= 3, finite m
  DecoupledInfinity,   // identity-proportional start (m infinite)
};

// Limiting singular values of the product for a block-constant problem:
// sigma1 once, sigma_secondary with multiplicity secondary_multiplicity
// (= num_blocks - 1), and zero_count exact zeros.
struct LimitSpectrum {
  double sigma1 = 0.0;
  double sigma_secondary = 0.0;
  int secondary_multiplicity = 0;
  int zero_count = 0;
  LimitBranch branch = LimitBranch::ClosedFormL2;

  Vector full_spectrum() const;
};

const char* branch_name(LimitBranch branch);

// 1 + (n - 1) (sigma_secondary / sigma1)^2, the stable rank of the limit.
double srank_limit(const LimitSpectrum& limit);

// Depth-2 limit; independent of the initialization scale.
LimitSpectrum closed_form_L2(double m, const BlockSpec& spec);

// Sign and log magnitude, for constants whose magnitude can overflow double.
struct SignedLog {
  int sign = 0;
  double log_abs = 0.0;

  double value() const;
};

// Separation constant of the depth >= 3 limit equations:
//   C = (alpha / m)^(2-L) * ((m + d - 1)^(2-L) - (m - 1)^(2-L)).
// Always negative for m > 1, d >= 2, L >= 3.
SignedLog constant_C(double alpha, double m, int depth, int dim);

// Depth >= 3 finite-m limit: solves, with a = (2 - L) / L,
//   sigma1^a - ((w d - sigma1) / (n - 1))^a = C   on (0, w d)
//   (w d - (n-1) sigma_i)^a - sigma_i^a = C       on (0, w d / (n - 1))
// by bisection in log space with exponent-factored sign evaluation. The two
// roots must satisfy sigma1 + (n-1) sigma_i = w d to 1e-8 * w d.
LimitSpectrum solve_implicit(double alpha, double m, int depth,
                             const BlockSpec& spec);

// Dispatch on depth and initialization. Requires num_blocks >= 2, depth >= 2
// and an alpha/m family start (finite m > 1 or the identity-proportional
// limit).
LimitSpectrum predict_limit(const BlockSpec& spec, const InitScheme& scheme,
                            int depth);

// Depth-2 limit of gradient flow when every row and every column contains
// exactly one observed entry. Row p of the outer factor pairs with the
// column of the inner factor holding its observed entry; each pair closes in
// a single hyperbolic rotation of magnitude rbar.
struct PretrainResult {
  Matrix a_end;               // outer factor limit
  Matrix b_end;               // inner factor limit
  std::vector<double> rbar;   // rotation per observation, sorted entry order
};

PretrainResult pretrain_closed_form(const Matrix& a0, const Matrix& b0,
                                    const ObservationSet& obs);

// Rates and bounds for continued training of the 2x2 problem from the
// balanced sqrt(w) I state when the added observed entry has target w12.
struct Lop2x2Bounds {
  double decay_rate = 0.0;            // loss decays at exp(-decay_rate * t)
  double envelope_coefficient = 0.0;  // loss(t) <= coefficient * exp(...)
  double sigma1_upper = 0.0;
  double sigma2_lower = 0.0;
  double srank_lower = 0.0;           // stable rank of the final product
};

Lop2x2Bounds lop_2x2_bounds(double w_star, double w12_star);

// Jacobian of the observed product entries with respect to the stacked
// depth-2 parameters Theta = [A; B^T], one row per observed entry, columns in
// column-major vec order. Row n has squared norm ||A_{i_n,.}||^2 +
// ||B_{.,j_n}||^2.
struct JacobianReport {
  Matrix j;                    // |obs| x 2 d^2
  double sigma_min = 0.0;
  double sigma_max = 0.0;
  double lazy_threshold = 0.0; // sigma_min^6 / (1152 d sigma_max^2)
  double loss = 0.0;           // loss of the product A B at the given point
  bool condition_holds = false;
};

JacobianReport jacobian(const Matrix& a, const Matrix& b,
                        const ObservationSet& obs);

// Lower bound on the stable rank of the outer factor along lazy training
// started at a_start with Jacobian smallest singular value sigma_min:
//   ((||A||_F - k)/(||A||_2 + k))^2, k = sigma_min / (4 sqrt(2 d)).
double srank_lower_bound_dxd(const Matrix& a_start, double sigma_min);

// Measured and bounded misalignment of the outer factor rows against the
// limiting direction of the inner factor's observed column, for the 2x2
// problem observing entries (0,0) and (1,0).
struct MisalignmentCheck {
  double lhs1 = 0.0;  // ||a_0 perp||^2 / ||a_0||^2 at the end state
  double lhs2 = 0.0;
  double rhs1 = 0.0;  // scale-driven upper bounds
  double rhs2 = 0.0;
};

MisalignmentCheck misalignment_2x2(const Matrix& a0, const Matrix& b0,
                                   const Matrix& a_end, const Matrix& b_end,
                                   double w11, double w21);

}  // namespace deepfact
