// Core types for deep matrix-factorization completion problems: observed
// entry sets, factor chains W_L * ... * W_1, initialization schemes, and the
// half squared-error loss with its per-layer gradients.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace deepfact {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DimensionError : ValidationError {
  using ValidationError::ValidationError;
};

// A regime where a requested closed form or solve does not exist.
struct NonConvergentRegime : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Observation {
  int row = 0;
  int col = 0;
  double target = 0.0;
};

// Observed (row, col, target) triples over a d x d matrix. Entries are kept
// sorted row-major and duplicate positions are rejected. Indices are 0-based.
class ObservationSet {
 public:
  ObservationSet(int dim, std::vector<Observation> entries);

  int dim() const { return dim_; }
  const std::vector<Observation>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  // Copy with targets taken from the corresponding entries of `values`.
  ObservationSet with_targets(const Matrix& values) const;

 private:
  int dim_ = 0;
  std::vector<Observation> entries_;
};

// Block-diagonal observation pattern: num_blocks diagonal blocks of size
// block_size, every entry inside a block observed with the same target.
struct BlockSpec {
  int block_size = 1;   // s
  int num_blocks = 1;   // n
  double target = 1.0;  // shared observed value, must be positive

  int dim() const { return block_size * num_blocks; }
  bool degenerate() const { return num_blocks == 1; }
  void validate() const;
};

// All entries of every block observed at the shared target.
ObservationSet build_observation_block(const BlockSpec& spec);

// Initialization family for a depth-L chain of d x d factors.
//   AlphaM:    diagonal alpha, every off-diagonal alpha / m (m > 1). The
//              m_infinite flag selects the exact alpha * I limit.
//   Identity:  alpha * I.
//   AllOnes:   alpha * J (rank one, every entry alpha).
//   Gaussian:  i.i.d. N(0, std^2) entries from the seeded counter stream,
//              ordered layer -> row -> col.
//   Explicit:  caller-provided factor list.
struct InitScheme {
  enum class Kind { AlphaM, Identity, AllOnes, Gaussian, Explicit };

  Kind kind = Kind::Identity;
  double alpha = 1.0;
  double m = 2.0;
  bool m_infinite = false;
  double std = 0.0;
  std::uint64_t seed = 0;
  std::vector<Matrix> matrices;

  static InitScheme alpha_m(double alpha, double m);
  static InitScheme alpha_m_infinity(double alpha);
  static InitScheme identity(double alpha);
  static InitScheme all_ones(double alpha);
  static InitScheme gaussian(double std, std::uint64_t seed);
  static InitScheme explicit_factors(std::vector<Matrix> matrices);
};

// A chain of square factors, innermost first: factors[0] = W_1 applies to the
// input side and factors[L-1] = W_L to the output side.
struct FactorChain {
  std::vector<Matrix> factors;

  int depth() const { return static_cast<int>(factors.size()); }
  int dim() const { return factors.empty() ? 0 : static_cast<int>(factors[0].rows()); }
  void validate() const;
};

FactorChain build_init(const InitScheme& scheme, int depth, int dim);

// W_L * ... * W_1. Depth zero gives the identity.
Matrix product(const FactorChain& chain);

// 0.5 * sum over observed entries of (product entry - target)^2.
double loss(const FactorChain& chain, const ObservationSet& obs);

// Gradient of `loss` with respect to each factor, innermost first.
// grad_l = (W_L..W_{l+1})^T * R * (W_{l-1}..W_1)^T with R the residual matrix
// supported on the observed entries.
std::vector<Matrix> layer_gradients(const FactorChain& chain,
                                    const ObservationSet& obs);

// Residual matrix R with R(i, j) = product(i, j) - target on observed
// positions and zero elsewhere.
Matrix residual_matrix(const FactorChain& chain, const ObservationSet& obs);

}  // namespace deepfact
