// Matrices that are constant on the diagonal (a), on off-diagonal entries
// inside aligned diagonal blocks (b), and on entries across blocks (c), for a
// fixed partition into n blocks of size s. The family is closed under sums
// and products and is simultaneously diagonalizable, with eigenvalues
//   l1 = a + (s-1) b + s (n-1) c   (multiplicity 1)
//   l2 = a + (s-1) b - s c         (multiplicity n-1)
//   l3 = a - b                     (multiplicity n (s-1))
#pragma once

#include <cmath>
#include <optional>

#include "deepfact/core.hpp"

namespace deepfact {

struct BlockForm {
  double diag = 0.0;   // a
  double inner = 0.0;  // b
  double cross = 0.0;  // c
};

struct BlockEigen {
  double l1 = 0.0;
  double l2 = 0.0;
  double l3 = 0.0;
};

inline BlockEigen block_form_eigenvalues(const BlockForm& f, int s, int n) {
  BlockEigen e;
  e.l1 = f.diag + (s - 1) * f.inner + static_cast<double>(s) * (n - 1) * f.cross;
  e.l2 = f.diag + (s - 1) * f.inner - static_cast<double>(s) * f.cross;
  e.l3 = f.diag - f.inner;
  return e;
}

// Inverse of block_form_eigenvalues.
inline BlockForm block_form_from_eigenvalues(const BlockEigen& e, int s, int n) {
  const double sn = static_cast<double>(s) * n;
  BlockForm f;
  f.diag = (e.l1 + (n - 1) * e.l2 + static_cast<double>(n) * (s - 1) * e.l3) / sn;
  f.inner = (e.l1 + (n - 1) * e.l2 - static_cast<double>(n) * e.l3) / sn;
  f.cross = (e.l1 - e.l2) / sn;
  return f;
}

inline Matrix block_form_matrix(const BlockForm& f, int s, int n) {
  const int d = s * n;
  Matrix m = Matrix::Constant(d, d, f.cross);
  for (int b = 0; b < n; ++b)
    for (int i = 0; i < s; ++i)
      for (int j = 0; j < s; ++j)
        m(b * s + i, b * s + j) = (i == j) ? f.diag : f.inner;
  return m;
}

// Recognize a matrix of the family for the given partition, within an
// absolute entrywise tolerance. Returns the exact representative read off
// from the first occurrence of each entry class.
inline std::optional<BlockForm> match_block_form(const Matrix& m, int s, int n,
                                                 double tol) {
  if (m.rows() != static_cast<Eigen::Index>(s) * n || m.rows() != m.cols())
    return std::nullopt;
  BlockForm f;
  f.diag = m(0, 0);
  f.inner = (s > 1) ? m(0, 1) : 0.0;
  f.cross = (n > 1) ? m(0, s) : 0.0;
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) {
      const bool same_block = (i / s) == (j / s);
      const double want = (i == j) ? f.diag : (same_block ? f.inner : f.cross);
      if (std::abs(m(i, j) - want) > tol) return std::nullopt;
    }
  return f;
}

}  // namespace deepfact
