#include "deepfact/metrics.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <vector>

namespace deepfact {

Vector spectrum(const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0)
    throw DimensionError("spectrum: empty matrix");
  Eigen::BDCSVD<Matrix> svd(m);
  return svd.singularValues();
}

double stable_rank_of_spectrum(const Vector& s) {
  if (s.size() == 0) throw DimensionError("stable_rank: empty spectrum");
  const double top = s(0);
  if (top == 0.0) throw ValidationError("stable_rank: zero matrix");
  return s.squaredNorm() / (top * top);
}

double effective_rank_of_spectrum(const Vector& s) {
  if (s.size() == 0) throw DimensionError("effective_rank: empty spectrum");
  const double top = s(0);
  if (top == 0.0) throw ValidationError("effective_rank: zero matrix");
  const double cutoff = 1e-12 * top;
  double total = 0.0;
  for (int k = 0; k < s.size(); ++k)
    if (s(k) >= cutoff) total += s(k);
  double entropy = 0.0;
  for (int k = 0; k < s.size(); ++k) {
    if (s(k) < cutoff) continue;
    const double p = s(k) / total;
    if (p > 0.0) entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

double stable_rank(const Matrix& m) { return stable_rank_of_spectrum(spectrum(m)); }

double effective_rank(const Matrix& m) {
  return effective_rank_of_spectrum(spectrum(m));
}

double reconstruction_error(const Matrix& w, const Matrix& w_star,
                            const ObservationSet& obs, bool unobserved_only) {
  if (w.rows() != w_star.rows() || w.cols() != w_star.cols())
    throw DimensionError("reconstruction_error: shape mismatch");
  if (w.rows() != obs.dim() || w.cols() != obs.dim())
    throw DimensionError("reconstruction_error: observation dim mismatch");
  if (!unobserved_only) {
    const double denom = w_star.norm();
    if (denom == 0.0)
      throw ValidationError("reconstruction_error: zero reference matrix");
    return (w - w_star).norm() / denom;
  }
  std::vector<bool> observed(static_cast<std::size_t>(obs.dim()) * obs.dim(),
                             false);
  for (const Observation& e : obs.entries())
    observed[static_cast<std::size_t>(e.row) * obs.dim() + e.col] = true;
  double num = 0.0, denom = 0.0;
  for (int i = 0; i < w.rows(); ++i)
    for (int j = 0; j < w.cols(); ++j) {
      if (observed[static_cast<std::size_t>(i) * obs.dim() + j]) continue;
      const double diff = w(i, j) - w_star(i, j);
      num += diff * diff;
      denom += w_star(i, j) * w_star(i, j);
    }
  if (denom == 0.0)
    throw ValidationError(
        "reconstruction_error: reference vanishes on unobserved entries");
  return std::sqrt(num / denom);
}

}  // namespace deepfact
