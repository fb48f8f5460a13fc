#include "deepfact/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace deepfact {

namespace {

struct Dsu {
  std::vector<int> parent;
  explicit Dsu(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

// Group observation indices by a per-observation component id, ordering the
// groups by their smallest observation index.
std::vector<std::vector<int>> group_by_root(const std::vector<int>& root) {
  std::vector<std::vector<int>> groups;
  std::vector<int> seen_root;
  for (std::size_t k = 0; k < root.size(); ++k) {
    auto it = std::find(seen_root.begin(), seen_root.end(), root[k]);
    if (it == seen_root.end()) {
      seen_root.push_back(root[k]);
      groups.emplace_back();
      groups.back().push_back(static_cast<int>(k));
    } else {
      groups[static_cast<std::size_t>(it - seen_root.begin())].push_back(
          static_cast<int>(k));
    }
  }
  return groups;
}

// Outer products W_L..W_{l+1} (suffix) and W_{l-1}..W_1 (prefix), 0-based l.
void chain_partials(const FactorChain& chain, std::vector<Matrix>& prefix,
                    std::vector<Matrix>& suffix) {
  const int L = chain.depth();
  const int d = chain.dim();
  prefix.assign(L, Matrix());
  suffix.assign(L, Matrix());
  prefix[0] = Matrix::Identity(d, d);
  for (int l = 1; l < L; ++l) prefix[l] = chain.factors[l - 1] * prefix[l - 1];
  suffix[L - 1] = Matrix::Identity(d, d);
  for (int l = L - 2; l >= 0; --l)
    suffix[l] = suffix[l + 1] * chain.factors[l + 1];
}

bool is_scaled_identity(const Matrix& w) {
  const double a = w(0, 0);
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      if (i == j ? w(i, j) != a : w(i, j) != 0.0) return false;
    }
  return true;
}

bool all_zero(const Matrix& w) {
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      if (w(i, j) != 0.0) return false;
  return true;
}

bool strictly_positive(const Matrix& w) {
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      if (!(w(i, j) > 0.0)) return false;
  return true;
}

std::vector<std::vector<int>> per_entry_partition(std::size_t n) {
  std::vector<std::vector<int>> parts(n);
  for (std::size_t k = 0; k < n; ++k) parts[k] = {static_cast<int>(k)};
  return parts;
}

std::vector<std::vector<int>> whole_partition(std::size_t n) {
  std::vector<std::vector<int>> parts(1);
  parts[0].resize(n);
  std::iota(parts[0].begin(), parts[0].end(), 0);
  return parts;
}

}  // namespace

ConnectivityReport connectivity(const ObservationSet& obs) {
  if (obs.empty())
    throw ValidationError("connectivity: empty observation set");
  const int d = obs.dim();
  Dsu dsu(2 * d);
  std::vector<bool> used(2 * d, false);
  for (const Observation& e : obs.entries()) {
    dsu.unite(e.row, d + e.col);
    used[e.row] = used[d + e.col] = true;
  }
  std::vector<int> obs_root(obs.size());
  for (std::size_t k = 0; k < obs.size(); ++k)
    obs_root[k] = dsu.find(obs.entries()[k].row);

  ConnectivityReport rep;
  rep.induced_partition = group_by_root(obs_root);
  rep.connected = rep.induced_partition.size() == 1;
  for (const std::vector<int>& part : rep.induced_partition) {
    const int root = dsu.find(obs.entries()[part[0]].row);
    std::vector<int> verts;
    for (int v = 0; v < 2 * d; ++v)
      if (used[v] && dsu.find(v) == root) verts.push_back(v);
    rep.components.push_back(std::move(verts));
  }
  return rep;
}

double gradient_inner_product(const FactorChain& chain, int i, int j, int p,
                              int q) {
  chain.validate();
  const int d = chain.dim();
  if (i < 0 || i >= d || j < 0 || j >= d || p < 0 || p >= d || q < 0 || q >= d)
    throw ValidationError("gradient_inner_product: index out of range");
  std::vector<Matrix> prefix, suffix;
  chain_partials(chain, prefix, suffix);
  double acc = 0.0;
  for (int l = 0; l < chain.depth(); ++l) {
    const double t = suffix[l].row(i).dot(suffix[l].row(p));
    const double s = prefix[l].col(j).dot(prefix[l].col(q));
    acc += t * s;
  }
  return acc;
}

Matrix gram_matrix(const FactorChain& chain, const ObservationSet& obs) {
  if (obs.empty()) throw ValidationError("gram_matrix: empty observation set");
  chain.validate();
  if (chain.dim() != obs.dim())
    throw DimensionError("gram_matrix: chain/observation dim mismatch");
  const int L = chain.depth();
  const int n = static_cast<int>(obs.size());
  std::vector<Matrix> prefix, suffix;
  chain_partials(chain, prefix, suffix);
  std::vector<Matrix> t_l(L), s_l(L);
  for (int l = 0; l < L; ++l) {
    t_l[l] = suffix[l] * suffix[l].transpose();
    s_l[l] = prefix[l].transpose() * prefix[l];
  }
  Matrix g = Matrix::Zero(n, n);
  for (int a = 0; a < n; ++a) {
    const Observation& ea = obs.entries()[a];
    for (int b = a; b < n; ++b) {
      const Observation& eb = obs.entries()[b];
      double acc = 0.0;
      for (int l = 0; l < L; ++l)
        acc += t_l[l](ea.row, eb.row) * s_l[l](ea.col, eb.col);
      g(a, b) = g(b, a) = acc;
    }
  }
  return g;
}

CouplingReport detect_decoupling(const FactorChain& chain,
                                 const ObservationSet& obs,
                                 const std::vector<FactorChain>& sample_states) {
  if (obs.empty())
    throw ValidationError("detect_decoupling: empty observation set");
  chain.validate();
  if (chain.dim() != obs.dim())
    throw DimensionError("detect_decoupling: chain/observation dim mismatch");
  const int L = chain.depth();
  const std::size_t n = obs.size();

  CouplingReport rep;
  rep.gram = gram_matrix(chain, obs);

  if (n == 1) {
    // A split into two or more groups needs at least two observations.
    rep.verdict = CouplingVerdict::Coupled;
    rep.partition = whole_partition(n);
    rep.structural_rule = "single-observation";
    return rep;
  }

  if (L == 1) {
    rep.verdict = CouplingVerdict::Decoupled;
    rep.partition = per_entry_partition(n);
    rep.structural_rule = "depth-1: entry gradients are orthogonal";
    return rep;
  }

  const ConnectivityReport conn = connectivity(obs);
  if (L == 2 && conn.induced_partition.size() >= 2) {
    rep.verdict = CouplingVerdict::Decoupled;
    rep.partition = conn.induced_partition;
    rep.structural_rule = "depth-2: disconnected observation graph";
    return rep;
  }

  bool identity_family = true;
  for (const Matrix& w : chain.factors)
    identity_family = identity_family && is_scaled_identity(w);
  if (identity_family && conn.induced_partition.size() >= 2) {
    // Scaled-identity factors keep every update confined to the vertex set of
    // its own component, so cross-component inner products stay zero.
    rep.verdict = CouplingVerdict::Decoupled;
    rep.partition = conn.induced_partition;
    rep.structural_rule = "scaled-identity factors: disconnected observation graph";
    return rep;
  }

  bool zero_chain = true;
  for (const Matrix& w : chain.factors) zero_chain = zero_chain && all_zero(w);
  if (zero_chain && L >= 2) {
    rep.verdict = CouplingVerdict::Decoupled;
    rep.partition = per_entry_partition(n);
    rep.structural_rule = "zero chain: the flow is stationary";
    return rep;
  }

  if (L >= 3) {
    bool positive = true;
    for (const Matrix& w : chain.factors)
      positive = positive && strictly_positive(w);
    if (positive) {
      // Inner-layer outer products of strictly positive factors are strictly
      // positive, so every pair of observed entries has positive inner
      // product at the given state.
      rep.verdict = CouplingVerdict::Coupled;
      rep.partition = whole_partition(n);
      rep.structural_rule = "depth >= 3: strictly positive factors";
      return rep;
    }
  }

  // Numeric fallback: threshold the gram matrix at every provided state.
  std::vector<Matrix> grams;
  grams.push_back(rep.gram);
  for (const FactorChain& state : sample_states)
    grams.push_back(gram_matrix(state, obs));
  double scale = 0.0;
  for (const Matrix& g : grams)
    for (Eigen::Index k = 0; k < g.rows(); ++k)
      scale = std::max(scale, std::abs(g(k, k)));
  const double tol = 1e-10 * (1.0 + scale);

  Dsu dsu(static_cast<int>(n));
  for (const Matrix& g : grams)
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b)
        if (std::abs(g(static_cast<Eigen::Index>(a),
                       static_cast<Eigen::Index>(b))) > tol)
          dsu.unite(static_cast<int>(a), static_cast<int>(b));
  std::vector<int> root(n);
  for (std::size_t k = 0; k < n; ++k) root[k] = dsu.find(static_cast<int>(k));
  std::vector<std::vector<int>> parts = group_by_root(root);
  if (parts.size() <= 1) {
    rep.verdict = CouplingVerdict::Coupled;
    rep.partition = whole_partition(n);
  } else {
    rep.verdict = CouplingVerdict::NumericallyDecoupledAtSampledTimes;
    rep.partition = std::move(parts);
  }
  return rep;
}

}  // namespace deepfact
