// Spectral summaries of a dense matrix: singular values, stable rank,
// entropy-based effective rank, and completion error against a reference.
#pragma once

#include "deepfact/core.hpp"

namespace deepfact {

// Singular values, descending, all non-negative.
Vector spectrum(const Matrix& m);

// ||M||_F^2 / sigma_max^2. Throws ValidationError on the zero matrix.
double stable_rank(const Matrix& m);

// exp of the Shannon entropy of the normalized singular values, natural log.
// Values below 1e-12 * sigma_max are treated as exact zeros; 0 log 0 = 0.
// Throws ValidationError on the zero matrix.
double effective_rank(const Matrix& m);

// Same metrics from an already computed spectrum (descending, non-negative).
double stable_rank_of_spectrum(const Vector& s);
double effective_rank_of_spectrum(const Vector& s);

// Relative Frobenius error ||W - W*||_F / ||W*||_F over all entries, or over
// the complement of the observed set when unobserved_only is set (both the
// difference and the normalizer are then restricted to unobserved positions).
// Throws ValidationError when the selected normalizer vanishes.
double reconstruction_error(const Matrix& w, const Matrix& w_star,
                            const ObservationSet& obs,
                            bool unobserved_only = false);

}  // namespace deepfact
