// Observation-graph structure and gradient coupling between observed entries.
//
// The bipartite observation graph has one vertex per matrix row (ids 0..d-1)
// and one per column (ids d..2d-1); each observed entry is an edge. Two
// observed entries are coupled when the gradients of the corresponding
// product entries, taken with respect to all factor parameters, have nonzero
// inner product at some reachable state.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "deepfact/core.hpp"

namespace deepfact {

struct ConnectivityReport {
  bool connected = false;
  // Non-isolated vertices grouped by component, each group sorted ascending,
  // groups ordered by their smallest contained observation index.
  std::vector<std::vector<int>> components;
  // Observation indices (into the sorted entry list) grouped the same way.
  std::vector<std::vector<int>> induced_partition;
};

ConnectivityReport connectivity(const ObservationSet& obs);

// <grad w_ij, grad w_pq> summed over all factors:
//   sum_l (S_out_l)_{i p} * (S_in_l)_{j q}
// with S_out_l = (W_L..W_{l+1})(W_L..W_{l+1})^T and
//      S_in_l  = (W_{l-1}..W_1)^T (W_{l-1}..W_1).
double gradient_inner_product(const FactorChain& chain, int i, int j, int p,
                              int q);

// Gram matrix over the observed entries in their sorted order. Symmetric PSD.
Matrix gram_matrix(const FactorChain& chain, const ObservationSet& obs);

enum class CouplingVerdict {
  Coupled,
  Decoupled,
  NumericallyDecoupledAtSampledTimes,
};

struct CouplingReport {
  CouplingVerdict verdict = CouplingVerdict::Coupled;
  // Observation indices grouped into parts with (certified or sampled) zero
  // cross inner products; a single part holding everything when coupled.
  std::vector<std::vector<int>> partition;
  // Gram matrix at the primary chain state.
  Matrix gram;
  // Names the structural rule that settled the verdict, when one applied.
  std::optional<std::string> structural_rule;
};

// Decide whether the observed entries split into independently evolving
// groups under gradient flow started at `chain`. Structural rules (exact,
// no numeric tolerance) are tried first:
//   depth 1: distinct entries always evolve independently;
//   depth 2: components of the observation graph never interact;
//   any depth, every factor an exact multiple of the identity: components of
//     the observation graph never interact;
//   all factors exactly zero: the flow is stationary;
//   depth >= 3, every factor entrywise strictly positive: all observed
//     entries interact through the inner layers.
// Otherwise the gram matrix is thresholded at 1e-10 * (1 + scale) at `chain`
// and at each extra state in `sample_states`, and graph components of the
// surviving edges give a sampled-time verdict.
CouplingReport detect_decoupling(
    const FactorChain& chain, const ObservationSet& obs,
    const std::vector<FactorChain>& sample_states = {});

}  // namespace deepfact
