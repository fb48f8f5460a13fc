#include "deepfact/core.hpp"

#include <algorithm>
#include <cmath>

#include "deepfact/rng.hpp"

namespace deepfact {

ObservationSet::ObservationSet(int dim, std::vector<Observation> entries)
    : dim_(dim), entries_(std::move(entries)) {
  if (dim_ <= 0) throw DimensionError("ObservationSet: dim must be positive");
  for (const Observation& e : entries_) {
    if (e.row < 0 || e.row >= dim_ || e.col < 0 || e.col >= dim_)
      throw ValidationError("ObservationSet: index out of range");
  }
  std::sort(entries_.begin(), entries_.end(),
            [](const Observation& a, const Observation& b) {
              return a.row != b.row ? a.row < b.row : a.col < b.col;
            });
  for (std::size_t k = 1; k < entries_.size(); ++k) {
    if (entries_[k].row == entries_[k - 1].row &&
        entries_[k].col == entries_[k - 1].col)
      throw ValidationError("ObservationSet: duplicate position");
  }
}

ObservationSet ObservationSet::with_targets(const Matrix& values) const {
  if (values.rows() != dim_ || values.cols() != dim_)
    throw DimensionError("with_targets: value matrix has wrong shape");
  std::vector<Observation> out = entries_;
  for (Observation& e : out) e.target = values(e.row, e.col);
  return ObservationSet(dim_, std::move(out));
}

void BlockSpec::validate() const {
  if (block_size < 1) throw ValidationError("BlockSpec: block_size < 1");
  if (num_blocks < 1) throw ValidationError("BlockSpec: num_blocks < 1");
  if (!(target > 0.0)) throw ValidationError("BlockSpec: target must be positive");
}

ObservationSet build_observation_block(const BlockSpec& spec) {
  spec.validate();
  const int s = spec.block_size;
  std::vector<Observation> entries;
  entries.reserve(static_cast<std::size_t>(spec.num_blocks) * s * s);
  for (int b = 0; b < spec.num_blocks; ++b)
    for (int i = 0; i < s; ++i)
      for (int j = 0; j < s; ++j)
        entries.push_back({b * s + i, b * s + j, spec.target});
  return ObservationSet(spec.dim(), std::move(entries));
}

InitScheme InitScheme::alpha_m(double alpha, double m) {
  if (!(m > 1.0)) throw ValidationError("alpha_m: requires m > 1");
  InitScheme s;
  s.kind = Kind::AlphaM;
  s.alpha = alpha;
  s.m = m;
  return s;
}

InitScheme InitScheme::alpha_m_infinity(double alpha) {
  InitScheme s;
  s.kind = Kind::AlphaM;
  s.alpha = alpha;
  s.m_infinite = true;
  return s;
}

InitScheme InitScheme::identity(double alpha) {
  InitScheme s;
  s.kind = Kind::Identity;
  s.alpha = alpha;
  return s;
}

InitScheme InitScheme::all_ones(double alpha) {
  InitScheme s;
  s.kind = Kind::AllOnes;
  s.alpha = alpha;
  return s;
}

InitScheme InitScheme::gaussian(double std, std::uint64_t seed) {
  if (!(std > 0.0)) throw ValidationError("gaussian: requires std > 0");
  InitScheme s;
  s.kind = Kind::Gaussian;
  s.std = std;
  s.seed = seed;
  return s;
}

InitScheme InitScheme::explicit_factors(std::vector<Matrix> matrices) {
  InitScheme s;
  s.kind = Kind::Explicit;
  s.matrices = std::move(matrices);
  return s;
}

void FactorChain::validate() const {
  if (factors.empty()) throw ValidationError("FactorChain: empty chain");
  const Eigen::Index d = factors[0].rows();
  for (const Matrix& w : factors) {
    if (w.rows() != d || w.cols() != d)
      throw DimensionError("FactorChain: factors must be square with equal dims");
  }
}

FactorChain build_init(const InitScheme& scheme, int depth, int dim) {
  if (depth < 1) throw ValidationError("build_init: depth < 1");
  if (dim < 1) throw ValidationError("build_init: dim < 1");
  FactorChain chain;
  chain.factors.reserve(depth);
  switch (scheme.kind) {
    case InitScheme::Kind::AlphaM: {
      if (scheme.m_infinite) {
        for (int l = 0; l < depth; ++l)
          chain.factors.push_back(scheme.alpha *
                                  Matrix::Identity(dim, dim));
      } else {
        Matrix w = Matrix::Constant(dim, dim, scheme.alpha / scheme.m);
        w.diagonal().setConstant(scheme.alpha);
        for (int l = 0; l < depth; ++l) chain.factors.push_back(w);
      }
      break;
    }
    case InitScheme::Kind::Identity:
      for (int l = 0; l < depth; ++l)
        chain.factors.push_back(scheme.alpha * Matrix::Identity(dim, dim));
      break;
    case InitScheme::Kind::AllOnes:
      for (int l = 0; l < depth; ++l)
        chain.factors.push_back(Matrix::Constant(dim, dim, scheme.alpha));
      break;
    case InitScheme::Kind::Gaussian: {
      std::uint64_t draw = 0;
      for (int l = 0; l < depth; ++l) {
        Matrix w(dim, dim);
        for (int r = 0; r < dim; ++r)
          for (int c = 0; c < dim; ++c)
            w(r, c) = scheme.std * rng::gaussian(scheme.seed, draw++);
        chain.factors.push_back(std::move(w));
      }
      break;
    }
    case InitScheme::Kind::Explicit: {
      if (static_cast<int>(scheme.matrices.size()) != depth)
        throw ValidationError("build_init: explicit factor count != depth");
      for (const Matrix& w : scheme.matrices) {
        if (w.rows() != dim || w.cols() != dim)
          throw DimensionError("build_init: explicit factor has wrong shape");
      }
      chain.factors = scheme.matrices;
      break;
    }
  }
  return chain;
}

Matrix product(const FactorChain& chain) {
  if (chain.factors.empty())
    throw ValidationError("product: empty chain");
  chain.validate();
  Matrix p = chain.factors[0];
  for (std::size_t l = 1; l < chain.factors.size(); ++l)
    p = chain.factors[l] * p;
  return p;
}

Matrix residual_matrix(const FactorChain& chain, const ObservationSet& obs) {
  if (obs.empty()) throw ValidationError("residual_matrix: empty observation set");
  if (chain.dim() != obs.dim())
    throw DimensionError("residual_matrix: chain/observation dim mismatch");
  const Matrix p = product(chain);
  Matrix r = Matrix::Zero(obs.dim(), obs.dim());
  for (const Observation& e : obs.entries())
    r(e.row, e.col) = p(e.row, e.col) - e.target;
  return r;
}

double loss(const FactorChain& chain, const ObservationSet& obs) {
  if (obs.empty()) throw ValidationError("loss: empty observation set");
  if (chain.dim() != obs.dim())
    throw DimensionError("loss: chain/observation dim mismatch");
  const Matrix p = product(chain);
  double acc = 0.0;
  for (const Observation& e : obs.entries()) {
    const double r = p(e.row, e.col) - e.target;
    acc += r * r;
  }
  return 0.5 * acc;
}

std::vector<Matrix> layer_gradients(const FactorChain& chain,
                                    const ObservationSet& obs) {
  if (obs.empty()) throw ValidationError("layer_gradients: empty observation set");
  chain.validate();
  if (chain.dim() != obs.dim())
    throw DimensionError("layer_gradients: chain/observation dim mismatch");
  const int L = chain.depth();
  const int d = chain.dim();

  // prefix[l] = W_{l-1} .. W_1 (identity for l = 1); 0-based index l-1.
  // suffix[l] = W_L .. W_{l+1} (identity for l = L).
  std::vector<Matrix> prefix(L), suffix(L);
  prefix[0] = Matrix::Identity(d, d);
  for (int l = 1; l < L; ++l) prefix[l] = chain.factors[l - 1] * prefix[l - 1];
  suffix[L - 1] = Matrix::Identity(d, d);
  for (int l = L - 2; l >= 0; --l)
    suffix[l] = suffix[l + 1] * chain.factors[l + 1];

  const Matrix r = residual_matrix(chain, obs);
  std::vector<Matrix> grads(L);
  for (int l = 0; l < L; ++l)
    grads[l] = suffix[l].transpose() * r * prefix[l].transpose();
  return grads;
}

}  // namespace deepfact
