#include "deepfact/theory.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "deepfact/metrics.hpp"

namespace deepfact {

namespace {

// Sign of sum_i s_i * exp(x_i), factoring out the largest exponent so the
// comparison never overflows.
int sign_of_exp_sum(const std::vector<std::pair<int, double>>& terms) {
  double mx = -std::numeric_limits<double>::infinity();
  for (const auto& [s, x] : terms)
    if (s != 0) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return 0;
  double acc = 0.0;
  for (const auto& [s, x] : terms) acc += s * std::exp(x - mx);
  return acc > 0.0 ? 1 : (acc < 0.0 ? -1 : 0);
}

// Bisection on a sign function known to flip from - to + on [lo, hi].
// Verifies the single sign change on a 100-point grid first.
template <class SignFn>
double bisect_sign(SignFn sign_at, double lo, double hi, const char* what) {
  if (sign_at(lo) >= 0 || sign_at(hi) < 0)
    throw std::logic_error(std::string(what) + ": bracket does not straddle the root");
  int prev = -2;
  for (int k = 0; k < 100; ++k) {
    const double v = lo + (hi - lo) * k / 99.0;
    int s = sign_at(v);
    if (s == 0) s = prev == -2 ? -1 : prev;
    if (prev != -2 && s < prev)
      throw std::logic_error(std::string(what) +
                             ": sign pattern is not monotone on the bracket");
    prev = s;
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (sign_at(mid) >= 0) {
      hi = mid;
    } else {
      lo = mid;
    }
    if (hi - lo < 1e-15 * std::max(1.0, std::abs(hi))) break;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

Vector LimitSpectrum::full_spectrum() const {
  const int d = 1 + secondary_multiplicity + zero_count;
  Vector out = Vector::Zero(d);
  out(0) = sigma1;
  for (int k = 0; k < secondary_multiplicity; ++k) out(1 + k) = sigma_secondary;
  return out;
}

const char* branch_name(LimitBranch branch) {
  switch (branch) {
    case LimitBranch::ClosedFormL2:
      return "closed_form_L2";
    case LimitBranch::Implicit:
      return "implicit";
    case LimitBranch::DecoupledInfinity:
      return "decoupled_infinity";
  }
  return "unknown";
}

double srank_limit(const LimitSpectrum& limit) {
  const double r = limit.sigma_secondary / limit.sigma1;
  return 1.0 + limit.secondary_multiplicity * r * r;
}

LimitSpectrum closed_form_L2(double m, const BlockSpec& spec) {
  spec.validate();
  if (!(m > 1.0)) throw ValidationError("closed_form_L2: requires m > 1");
  if (spec.degenerate())
    throw ValidationError("closed_form_L2: requires num_blocks >= 2");
  const int n = spec.num_blocks;
  const double d = spec.dim();
  const double w = spec.target;
  const double top = m + d - 1.0;
  const double low = m - 1.0;
  const double denom = top * top + (n - 1) * low * low;
  LimitSpectrum out;
  out.sigma1 = w * d * top * top / denom;
  out.sigma_secondary = w * d * low * low / denom;
  out.secondary_multiplicity = n - 1;
  out.zero_count = spec.dim() - n;
  out.branch = LimitBranch::ClosedFormL2;
  return out;
}

double SignedLog::value() const { return sign * std::exp(log_abs); }

SignedLog constant_C(double alpha, double m, int depth, int dim) {
  if (depth < 3) throw ValidationError("constant_C: requires depth >= 3");
  if (!(m > 1.0)) throw ValidationError("constant_C: requires m > 1");
  if (!(alpha > 0.0)) throw ValidationError("constant_C: requires alpha > 0");
  if (dim < 2) throw ValidationError("constant_C: requires dim >= 2");
  const double beta = 2.0 - depth;
  const double ratio = (m - 1.0) / (m + dim - 1.0);  // in (0, 1)
  SignedLog out;
  out.sign = -1;
  out.log_abs = beta * (std::log(alpha) - std::log(m)) +
                beta * std::log(m - 1.0) +
                std::log1p(-std::pow(ratio, depth - 2));
  return out;
}

LimitSpectrum solve_implicit(double alpha, double m, int depth,
                             const BlockSpec& spec) {
  spec.validate();
  if (spec.degenerate())
    throw ValidationError("solve_implicit: requires num_blocks >= 2");
  const SignedLog c = constant_C(alpha, m, depth, spec.dim());
  if (c.sign >= 0)
    throw std::logic_error("solve_implicit: separation constant must be negative");
  const double log_c = c.log_abs;
  const int n = spec.num_blocks;
  const double wd = spec.target * spec.dim();
  const double a = (2.0 - depth) / depth;
  const double log_n1 = std::log(static_cast<double>(n - 1));

  // sigma1 via v = log(w d - sigma1):
  //   g(v) = (w d - e^v)^a - (e^v / (n-1))^a + |C|, increasing in v.
  auto sign1 = [&](double v) {
    const double tau = std::exp(v);
    const double sigma = wd - tau;
    if (!(sigma > 0.0)) return 1;
    return sign_of_exp_sum({{1, a * std::log(sigma)},
                            {-1, a * (v - log_n1)},
                            {1, log_c}});
  };
  double v_hi = std::log(wd) + std::log1p(-1e-12);
  double v_lo = v_hi - 5.0;
  for (int k = 0; k < 400 && sign1(v_lo) >= 0; ++k) v_lo -= 30.0;
  const double v_root = bisect_sign(sign1, v_lo, v_hi, "solve_implicit[sigma1]");
  const double sigma1 = wd - std::exp(v_root);

  // sigma_i via u = log(sigma_i):
  //   h(u) = (w d - (n-1) e^u)^a - e^(a u) + |C|, increasing in u.
  auto sign2 = [&](double u) {
    const double rest = wd - (n - 1) * std::exp(u);
    if (!(rest > 0.0)) return 1;
    return sign_of_exp_sum(
        {{1, a * std::log(rest)}, {-1, a * u}, {1, log_c}});
  };
  double u_hi = std::log(wd) - log_n1 + std::log1p(-1e-12);
  double u_lo = u_hi - 5.0;
  for (int k = 0; k < 400 && sign2(u_lo) >= 0; ++k) u_lo -= 30.0;
  const double u_root = bisect_sign(sign2, u_lo, u_hi, "solve_implicit[sigma_i]");
  const double sigma_i = std::exp(u_root);

  if (std::abs(sigma1 + (n - 1) * sigma_i - wd) > 1e-8 * wd)
    throw std::logic_error(
        "solve_implicit: roots violate the trace constraint; solver defect");

  LimitSpectrum out;
  out.sigma1 = sigma1;
  out.sigma_secondary = sigma_i;
  out.secondary_multiplicity = n - 1;
  out.zero_count = spec.dim() - n;
  out.branch = LimitBranch::Implicit;
  return out;
}

LimitSpectrum predict_limit(const BlockSpec& spec, const InitScheme& scheme,
                            int depth) {
  spec.validate();
  if (depth < 2) throw ValidationError("predict_limit: requires depth >= 2");
  if (spec.degenerate())
    throw ValidationError(
        "predict_limit: with a single block every product entry is observed, "
        "the flow just fits the block and the spectrum question is empty; "
        "use num_blocks >= 2");
  const bool identity_like =
      scheme.kind == InitScheme::Kind::Identity ||
      (scheme.kind == InitScheme::Kind::AlphaM && scheme.m_infinite);
  if (scheme.kind == InitScheme::Kind::AllOnes)
    throw ValidationError(
        "predict_limit: uniform factors start with a vanishing secondary "
        "eigenvalue; the limit family is degenerate");
  if (!identity_like && scheme.kind != InitScheme::Kind::AlphaM)
    throw ValidationError(
        "predict_limit: only alpha/m family starts admit a prediction");
  if (!(scheme.alpha > 0.0))
    throw ValidationError("predict_limit: requires alpha > 0");

  if (identity_like) {
    LimitSpectrum out;
    out.sigma1 = spec.block_size * spec.target;
    out.sigma_secondary = out.sigma1;
    out.secondary_multiplicity = spec.num_blocks - 1;
    out.zero_count = spec.dim() - spec.num_blocks;
    out.branch = LimitBranch::DecoupledInfinity;
    return out;
  }
  if (depth == 2) return closed_form_L2(scheme.m, spec);
  return solve_implicit(scheme.alpha, scheme.m, depth, spec);
}

PretrainResult pretrain_closed_form(const Matrix& a0, const Matrix& b0,
                                    const ObservationSet& obs) {
  const int d = obs.dim();
  if (a0.rows() != d || a0.cols() != d || b0.rows() != d || b0.cols() != d)
    throw DimensionError("pretrain_closed_form: factor shape mismatch");
  if (obs.size() != static_cast<std::size_t>(d))
    throw ValidationError(
        "pretrain_closed_form: needs exactly one observation per row/column");
  std::vector<int> row_obs(d, -1), col_obs(d, -1);
  for (std::size_t k = 0; k < obs.size(); ++k) {
    const Observation& e = obs.entries()[k];
    if (row_obs[e.row] != -1 || col_obs[e.col] != -1)
      throw ValidationError(
          "pretrain_closed_form: pattern must hit each row and column once");
    row_obs[e.row] = static_cast<int>(k);
    col_obs[e.col] = static_cast<int>(k);
  }

  PretrainResult out;
  out.rbar.resize(obs.size());
  for (std::size_t k = 0; k < obs.size(); ++k) {
    const Observation& e = obs.entries()[k];
    const double p = a0.row(e.row).dot(b0.col(e.col));
    const double q =
        a0.row(e.row).squaredNorm() + b0.col(e.col).squaredNorm();
    const double disc = e.target * e.target - p * p + 0.25 * q * q;
    if (disc < 0.0)
      throw NonConvergentRegime(
          "pretrain_closed_form: negative discriminant, no finite rotation");
    const double denom = e.target + std::sqrt(disc);
    const double arg = (p + 0.5 * q) / denom;
    if (!(arg > 0.0) || denom == 0.0)
      throw NonConvergentRegime(
          "pretrain_closed_form: target unreachable from this start");
    out.rbar[k] = 0.5 * std::log(arg);
  }

  out.a_end = Matrix(d, d);
  out.b_end = Matrix(d, d);
  for (int p = 0; p < d; ++p) {
    const int k_row = row_obs[p];
    const double r = out.rbar[static_cast<std::size_t>(k_row)];
    const int j_p = obs.entries()[static_cast<std::size_t>(k_row)].col;
    for (int q = 0; q < d; ++q)
      out.a_end(p, q) =
          a0(p, q) * std::cosh(r) - b0(q, j_p) * std::sinh(r);
  }
  for (int q = 0; q < d; ++q) {
    const int k_col = col_obs[q];
    const double r = out.rbar[static_cast<std::size_t>(k_col)];
    const int i_q = obs.entries()[static_cast<std::size_t>(k_col)].row;
    for (int p = 0; p < d; ++p)
      out.b_end(p, q) =
          b0(p, q) * std::cosh(r) - a0(i_q, p) * std::sinh(r);
  }
  return out;
}

Lop2x2Bounds lop_2x2_bounds(double w_star, double w12_star) {
  if (!(w_star > 0.0)) throw ValidationError("lop_2x2_bounds: requires w > 0");
  if (w12_star < 0.0)
    throw ValidationError("lop_2x2_bounds: requires w12 >= 0");
  Lop2x2Bounds out;
  out.decay_rate = 2.0 * w_star;
  out.envelope_coefficient = 0.5 * w12_star * w12_star;
  out.sigma1_upper = w_star * std::exp(2.0 * w12_star / w_star);
  out.sigma2_lower = w_star * std::exp(-2.0 * w12_star / w_star);
  out.srank_lower = 1.0 + std::exp(-8.0 * w12_star / w_star);
  return out;
}

JacobianReport jacobian(const Matrix& a, const Matrix& b,
                        const ObservationSet& obs) {
  const int d = obs.dim();
  if (a.rows() != d || a.cols() != d || b.rows() != d || b.cols() != d)
    throw DimensionError("jacobian: factor shape mismatch");
  if (obs.empty()) throw ValidationError("jacobian: empty observation set");
  const int n = static_cast<int>(obs.size());
  JacobianReport rep;
  rep.j = Matrix::Zero(n, 2 * d * d);
  Matrix z(2 * d, d);
  for (int k = 0; k < n; ++k) {
    const Observation& e = obs.entries()[k];
    z.setZero();
    z.row(e.row) = b.col(e.col).transpose();
    z.row(d + e.col) = a.row(e.row);
    rep.j.row(k) = Eigen::Map<const Eigen::RowVectorXd>(z.data(), 2 * d * d);
  }
  Eigen::BDCSVD<Matrix> svd(rep.j);
  const Vector sv = svd.singularValues();
  rep.sigma_max = sv(0);
  rep.sigma_min = sv(sv.size() - 1);
  rep.lazy_threshold = std::pow(rep.sigma_min, 6) /
                       (1152.0 * d * rep.sigma_max * rep.sigma_max);
  const Matrix prod = a * b;
  double acc = 0.0;
  for (const Observation& e : obs.entries()) {
    const double r = prod(e.row, e.col) - e.target;
    acc += r * r;
  }
  rep.loss = 0.5 * acc;
  rep.condition_holds = rep.sigma_min > 0.0 && rep.loss <= rep.lazy_threshold;
  return rep;
}

double srank_lower_bound_dxd(const Matrix& a_start, double sigma_min) {
  if (a_start.rows() != a_start.cols())
    throw DimensionError("srank_lower_bound_dxd: square factor expected");
  if (sigma_min < 0.0)
    throw ValidationError("srank_lower_bound_dxd: sigma_min < 0");
  const double d = static_cast<double>(a_start.rows());
  const double k = sigma_min / (4.0 * std::sqrt(2.0 * d));
  const double num = std::max(0.0, a_start.norm() - k);
  const double den = spectrum(a_start)(0) + k;
  if (den == 0.0)
    throw ValidationError("srank_lower_bound_dxd: zero factor");
  const double r = num / den;
  return r * r;
}

MisalignmentCheck misalignment_2x2(const Matrix& a0, const Matrix& b0,
                                   const Matrix& a_end, const Matrix& b_end,
                                   double w11, double w21) {
  if (a0.rows() != 2 || a0.cols() != 2 || b0.rows() != 2 || b0.cols() != 2 ||
      a_end.rows() != 2 || a_end.cols() != 2 || b_end.rows() != 2 ||
      b_end.cols() != 2)
    throw DimensionError("misalignment_2x2: expects 2x2 factors");
  if (w11 == 0.0 || w21 == 0.0)
    throw ValidationError("misalignment_2x2: targets must be nonzero");
  const Vector u = b_end.col(0);
  const double un = u.norm();
  if (un == 0.0)
    throw ValidationError("misalignment_2x2: inner factor column vanished");

  MisalignmentCheck out;
  const double b1sq = b0.col(0).squaredNorm();
  const double common =
      a0.squaredNorm() *
      (std::sqrt(b1sq * b1sq + 4.0 * w11 * w11 + 4.0 * w21 * w21) + b1sq);
  out.rhs1 = common / (2.0 * w11 * w11);
  out.rhs2 = common / (2.0 * w21 * w21);
  for (int i = 0; i < 2; ++i) {
    const Vector ai = a_end.row(i).transpose();
    const double norm2 = ai.squaredNorm();
    if (norm2 == 0.0)
      throw ValidationError("misalignment_2x2: outer factor row vanished");
    const double along = ai.dot(u) / un;
    const double perp2 = std::max(0.0, norm2 - along * along);
    (i == 0 ? out.lhs1 : out.lhs2) = perp2 / norm2;
  }
  return out;
}

}  // namespace deepfact
