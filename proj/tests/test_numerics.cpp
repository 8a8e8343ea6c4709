#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "renyiflow/numerics.hpp"

using namespace renyiflow;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

DenseMatrix random_symmetric(Rng& rng, std::size_t n) {
  DenseMatrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      const double v = rng.normal();
      a(i, j) = v;
      a(j, i) = v;
    }
  return a;
}
}  // namespace

TEST_CASE("logsumexp handles identical, absorbing, and shifted inputs") {
  const std::vector<double> both_zero = {0.0, 0.0};
  CHECK(logsumexp(both_zero) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  const std::vector<double> with_neg_inf = {-kInf, 0.0};
  CHECK(logsumexp(with_neg_inf) == doctest::Approx(0.0).epsilon(1e-15));

  // Oracle: shift-by-max arithmetic at extended precision.
  const std::vector<double> large = {1000.0, 1000.5};
  const long double expect =
      1000.5L + std::log1p(std::exp(static_cast<long double>(-0.5L)));
  CHECK(logsumexp(large) ==
        doctest::Approx(static_cast<double>(expect)).epsilon(1e-14));
}

TEST_CASE("logsumexp rejects empty and non-finite-above inputs") {
  CHECK_THROWS_WITH_AS(logsumexp({}), "empty reduction", std::invalid_argument);
  const std::vector<double> has_inf = {0.0, kInf};
  CHECK_THROWS_AS(logsumexp(has_inf), std::invalid_argument);
  const std::vector<double> has_nan = {0.0, std::nan("")};
  CHECK_THROWS_AS(logsumexp(has_nan), std::invalid_argument);
  const std::vector<double> all_neg_inf = {-kInf, -kInf};
  CHECK(logsumexp(all_neg_inf) == -kInf);
}

TEST_CASE("logsumexp shift invariance") {
  Rng rng(123);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(12);
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-30.0, 10.0);
    const double c = rng.uniform(-50.0, 50.0);
    std::vector<double> shifted = v;
    for (double& x : shifted) x += c;
    CHECK(logsumexp(shifted) == doctest::Approx(logsumexp(v) + c).epsilon(1e-12));
  }
}

TEST_CASE("sym_eig on small closed-form matrices") {
  const auto id = sym_eig(DenseMatrix::identity(2));
  CHECK(id.values[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(id.values[1] == doctest::Approx(1.0).epsilon(1e-12));

  // Characteristic polynomial of [[2,1],[1,2]]: (2-l)^2 = 1, so {1, 3}.
  DenseMatrix a(2, 2);
  a(0, 0) = 2.0;
  a(0, 1) = 1.0;
  a(1, 0) = 1.0;
  a(1, 1) = 2.0;
  const auto eig = sym_eig(a);
  CHECK(eig.values[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(eig.values[1] == doctest::Approx(3.0).epsilon(1e-12));

  const std::vector<double> d = {4.0, 9.0};
  const auto diag = sym_eig(DenseMatrix::diagonal(d));
  CHECK(diag.values[0] == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(diag.values[1] == doctest::Approx(9.0).epsilon(1e-14));
}

TEST_CASE("sym_eig rejects asymmetric and oversized input") {
  DenseMatrix bad(2, 2);
  bad(0, 1) = 1.0;
  bad(1, 0) = 2.0;
  CHECK_THROWS_AS(sym_eig(bad), std::invalid_argument);
  CHECK_THROWS_AS(sym_eig(DenseMatrix::identity(65)), std::invalid_argument);
}

TEST_CASE("sym_eig reconstruction and residuals on random matrices") {
  Rng rng(7);
  for (std::size_t n : {2, 3, 5, 8, 16}) {
    const DenseMatrix a = random_symmetric(rng, n);
    const auto eig = sym_eig(a);
    const double norm_a = a.frobenius_norm();

    // ||A - V L V^T||_F <= 1e-9 ||A||_F
    double recon_err = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k)
          s += eig.vectors(i, k) * eig.values[k] * eig.vectors(j, k);
        recon_err += (a(i, j) - s) * (a(i, j) - s);
      }
    CHECK(std::sqrt(recon_err) <= 1e-9 * norm_a);

    // A v_k = l_k v_k with residual <= 1e-10 ||A||, vectors orthonormal.
    for (std::size_t k = 0; k < n; ++k) {
      std::vector<double> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = eig.vectors(i, k);
      const auto av = a.multiply(v);
      double resid = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        resid += (av[i] - eig.values[k] * v[i]) * (av[i] - eig.values[k] * v[i]);
      CHECK(std::sqrt(resid) <= 1e-10 * std::max(norm_a, 1.0));
      for (std::size_t k2 = 0; k2 <= k; ++k2) {
        std::vector<double> v2(n);
        for (std::size_t i = 0; i < n; ++i) v2[i] = eig.vectors(i, k2);
        CHECK(dot(v, v2) == doctest::Approx(k == k2 ? 1.0 : 0.0).epsilon(1e-10));
      }
    }
    for (std::size_t k = 0; k + 1 < n; ++k) CHECK(eig.values[k] <= eig.values[k + 1]);
  }
}

TEST_CASE("cholesky factors SPD matrices and rejects indefinite ones") {
  DenseMatrix a(2, 2);
  a(0, 0) = 4.0;
  a(0, 1) = 2.0;
  a(1, 0) = 2.0;
  a(1, 1) = 3.0;
  const auto l = cholesky(a);
  CHECK(l(0, 0) == doctest::Approx(2.0));
  CHECK(l(1, 0) == doctest::Approx(1.0));
  CHECK(l(1, 1) == doctest::Approx(std::sqrt(2.0)));

  DenseMatrix indef(2, 2);
  indef(0, 0) = 1.0;
  indef(0, 1) = 2.0;
  indef(1, 0) = 2.0;
  indef(1, 1) = 1.0;
  CHECK_THROWS_AS(cholesky(indef), std::runtime_error);
}

TEST_CASE("generalized_min_rayleigh closed-form cases") {
  const auto well_specified =
      generalized_min_rayleigh(DenseMatrix::identity(3), DenseMatrix::identity(3));
  CHECK(well_specified.alpha_min == doctest::Approx(1.0).epsilon(1e-12));

  const std::vector<double> v_diag = {2.0, 1.0};
  const auto axis = generalized_min_rayleigh(DenseMatrix::diagonal(v_diag),
                                             DenseMatrix::identity(2));
  CHECK(axis.alpha_min == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(axis.direction[1]) == doctest::Approx(1.0).epsilon(1e-10));

  // Contaminated-regression population matrices, sigma=0.5, eps=0.2, a=2:
  // V = E[phi phi^T]/s2, J = V + eps(1-eps)a^2/s4 * E[X+^2 phi phi^T] with
  // E[X^2]=1/3, E[X X+]=E[X+^2]=1/6, and E[X+^2 phi phi^T] entries all 1/10.
  const double s2 = 0.25;
  DenseMatrix v(2, 2);
  v(0, 0) = (1.0 / 3.0) / s2;
  v(0, 1) = v(1, 0) = (1.0 / 6.0) / s2;
  v(1, 1) = (1.0 / 6.0) / s2;
  DenseMatrix j = v;
  const double contamination = 0.2 * 0.8 * 4.0 / (s2 * s2);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t k = 0; k < 2; ++k) j(i, k) += contamination * 0.1;
  const auto result = generalized_min_rayleigh(v, j);
  CHECK(result.alpha_min == doctest::Approx(1.25 / 3.17).epsilon(1e-10));
  CHECK(std::abs(result.direction[1]) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(result.direction[0]) <= 1e-9);
}

TEST_CASE("generalized_min_rayleigh rejects a singular J") {
  DenseMatrix j(2, 2);
  j(0, 0) = 1.0;  // second row/column zero
  CHECK_THROWS_WITH_AS(generalized_min_rayleigh(DenseMatrix::identity(2), j),
                       "Fisher matrix singular", std::runtime_error);
}

TEST_CASE("generalized_min_rayleigh scaling invariance") {
  Rng rng(99);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(4);
    DenseMatrix v = random_symmetric(rng, n);
    // Make J comfortably positive definite.
    DenseMatrix j = random_symmetric(rng, n);
    DenseMatrix jj(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k) {
        double s = 0.0;
        for (std::size_t r = 0; r < n; ++r) s += j(i, r) * j(k, r);
        jj(i, k) = s + (i == k ? 0.5 : 0.0);
      }

    const auto base = generalized_min_rayleigh(v, jj);

    // Power-of-two scaling is bit-exact through the factorization.
    DenseMatrix v4 = v, j4 = jj;
    v4 *= 4.0;
    j4 *= 4.0;
    CHECK(generalized_min_rayleigh(v4, j4).alpha_min == base.alpha_min);

    DenseMatrix v3 = v, j3 = jj;
    v3 *= 3.0;
    j3 *= 3.0;
    CHECK(generalized_min_rayleigh(v3, j3).alpha_min ==
          doctest::Approx(base.alpha_min).epsilon(1e-12));
  }
}

TEST_CASE("Rng streams are deterministic per seed") {
  Rng a(1234), b(1234), c(1235);
  bool all_equal = true;
  bool any_diff = false;
  for (int k = 0; k < 64; ++k) {
    const auto x = a.next_u64();
    all_equal = all_equal && (x == b.next_u64());
    any_diff = any_diff || (x != c.next_u64());
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("Rng samplers have sane ranges and moments") {
  Rng rng(2024);
  double sum = 0.0, sum_sq = 0.0;
  const int n = 200000;
  for (int k = 0; k < n; ++k) {
    const double z = rng.normal();
    sum += z;
    sum_sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(sum_sq / n == doctest::Approx(1.0).epsilon(0.01));

  for (int k = 0; k < 1000; ++k) {
    const double u = rng.uniform(-2.0, 5.0);
    CHECK(u >= -2.0);
    CHECK(u < 5.0);
    CHECK(rng.uniform_index(7) < 7);
  }

  const std::vector<double> probs = {0.25, 0.25, 0.5};
  std::vector<int> counts(3, 0);
  for (int k = 0; k < 40000; ++k) counts[rng.categorical(probs)] += 1;
  CHECK(counts[2] / 40000.0 == doctest::Approx(0.5).epsilon(0.03));
}

TEST_CASE("mix_seed separates sub-streams") {
  CHECK(mix_seed(1, 1) != mix_seed(1, 2));
  CHECK(mix_seed(1, 1) != mix_seed(2, 1));
  CHECK(mix_seed(7, 3) == mix_seed(7, 3));
}
