#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <Eigen/QR>

#include "deepfact/core.hpp"
#include "deepfact/metrics.hpp"

using namespace deepfact;

namespace {

Matrix random_orthogonal(int d, std::uint64_t seed) {
  Matrix g(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      g(i, j) = std::cos(1.7 * (seed + 3.1 * i + 7.3 * j)) +
                0.3 * std::sin(0.9 * (i * d + j) + seed);
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ();
}

}  // namespace

TEST_CASE("spectrum of a symmetric PSD matrix equals its eigenvalues") {
  Matrix m(2, 2);
  m << 2, 1, 1, 2;
  const Vector s = spectrum(m);
  REQUIRE(s.size() == 2);
  CHECK(s(0) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(s(1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("spectrum is descending, non-negative, and Frobenius-consistent") {
  Matrix m(4, 4);
  m << 1.0, -2.0, 0.5, 3.0, 0.0, 1.5, -1.0, 0.25, 2.0, 2.0, 2.0, -0.5, 1.0,
      0.0, -3.0, 0.75;
  const Vector s = spectrum(m);
  for (int k = 0; k + 1 < s.size(); ++k) CHECK(s(k) >= s(k + 1));
  CHECK(s(s.size() - 1) >= 0.0);
  CHECK(s.squaredNorm() ==
        doctest::Approx(m.squaredNorm()).epsilon(1e-10));
}

TEST_CASE("stable rank of diag(3, 1) is 10/9") {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = 3.0;
  m(1, 1) = 1.0;
  CHECK(stable_rank(m) == doctest::Approx(10.0 / 9.0).epsilon(1e-14));
}

TEST_CASE("stable rank is bounded by 1 and the rank") {
  Matrix m(3, 3);
  m << 1, 2, 3, 4, 5, 6, 7, 8, 10;
  const double sr = stable_rank(m);
  CHECK(sr >= 1.0);
  CHECK(sr <= 3.0);
  CHECK(stable_rank(Matrix::Identity(5, 5)) ==
        doctest::Approx(5.0).epsilon(1e-14));
}

TEST_CASE("effective rank counts equal singular values exactly") {
  Matrix m = Matrix::Zero(3, 3);
  m(0, 0) = 1.0;
  m(1, 1) = 1.0;
  CHECK(effective_rank(m) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(effective_rank(Matrix::Identity(4, 4)) ==
        doctest::Approx(4.0).epsilon(1e-12));

  Matrix t = Matrix::Zero(3, 3);
  t(0, 0) = 2.0;
  t(1, 1) = 1.0;
  t(2, 2) = 1.0;
  // probabilities (1/2, 1/4, 1/4) -> exp(H) = 2 sqrt(2)
  CHECK(effective_rank(t) ==
        doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("effective rank ignores singular values below the cutoff") {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = 1.0;
  m(1, 1) = 1e-15;
  CHECK(effective_rank(m) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rank metrics are scale and rotation invariant") {
  Matrix m(3, 3);
  m << 0.5, 1.0, -0.25, 2.0, -1.0, 0.0, 0.75, 0.3, 1.2;
  const Matrix q1 = random_orthogonal(3, 4);
  const Matrix q2 = random_orthogonal(3, 9);
  CHECK(effective_rank(5.0 * m) ==
        doctest::Approx(effective_rank(m)).epsilon(1e-12));
  CHECK(stable_rank(5.0 * m) ==
        doctest::Approx(stable_rank(m)).epsilon(1e-12));
  CHECK(effective_rank(q1 * m * q2) ==
        doctest::Approx(effective_rank(m)).epsilon(1e-10));
  CHECK(stable_rank(q1 * m * q2) ==
        doctest::Approx(stable_rank(m)).epsilon(1e-10));
}

TEST_CASE("rank metrics reject the zero matrix") {
  const Matrix z = Matrix::Zero(3, 3);
  CHECK(spectrum(z).maxCoeff() == 0.0);
  CHECK_THROWS_AS(stable_rank(z), ValidationError);
  CHECK_THROWS_AS(effective_rank(z), ValidationError);
}

TEST_CASE("reconstruction error over all entries") {
  Matrix w = Matrix::Identity(2, 2);
  Matrix w_star = 2.0 * Matrix::Identity(2, 2);
  ObservationSet obs(2, {{0, 0, 2.0}});
  CHECK(reconstruction_error(w, w_star, obs) ==
        doctest::Approx(0.5).epsilon(1e-14));
  CHECK_THROWS_AS(reconstruction_error(w, Matrix::Zero(2, 2), obs),
                  ValidationError);
}

TEST_CASE("reconstruction error restricted to unobserved entries") {
  Matrix w = Matrix::Identity(2, 2);
  Matrix w_star = 2.0 * Matrix::Identity(2, 2);
  ObservationSet obs(2, {{0, 0, 2.0}});
  // Unobserved: (0,1), (1,0), (1,1). Differences 0, 0, 1; references 0, 0, 2.
  CHECK(reconstruction_error(w, w_star, obs, true) ==
        doctest::Approx(0.5).epsilon(1e-14));
  // Reference zero on every unobserved entry -> undefined.
  Matrix spike = Matrix::Zero(2, 2);
  spike(0, 0) = 2.0;
  CHECK_THROWS_AS(reconstruction_error(w, spike, obs, true), ValidationError);
}
