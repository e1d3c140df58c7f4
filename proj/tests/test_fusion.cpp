#include <doctest.h>

#include <cmath>

#include "biofuse/errors.hpp"
#include "biofuse/fusion.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace biofuse;

namespace {

Tensor random_symmetric(Rng& rng, std::size_t n) {
  Tensor a({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) a.at(i, j) = a.at(j, i) = rng.uniform(-2, 2);
  return a;
}

std::vector<double> column(const Tensor& m, std::size_t c) {
  std::vector<double> v(m.dim(0));
  for (std::size_t r = 0; r < m.dim(0); ++r) v[r] = m.at(r, c);
  return v;
}

}  // namespace

TEST_SUITE("fusion") {

TEST_CASE("2x2 worked example") {
  // [[2,1],[1,2]] has eigenpairs 3 -> (1,1)/sqrt2 and 1 -> (1,-1)/sqrt2 up to sign.
  const Tensor a(Shape{2, 2}, std::vector<double>{2, 1, 1, 2});
  const EigenDecomposition e = jacobi_eigen(a);
  CHECK(e.values[0] == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(e.values[1] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(e.vectors.at(0, 0)) == doctest::Approx(std::sqrt(0.5)));
  CHECK(e.vectors.at(0, 0) * e.vectors.at(1, 0) > 0);
  CHECK(e.vectors.at(0, 1) * e.vectors.at(1, 1) < 0);

  const Tensor diag(Shape{3, 3}, std::vector<double>{1, 0, 0, 0, 5, 0, 0, 0, 3});
  const EigenDecomposition d = jacobi_eigen(diag);
  CHECK(d.values == std::vector<double>{5, 3, 1});
  CHECK(d.sweeps <= 1);
  CHECK_THROWS_AS(jacobi_eigen(Tensor(Shape{2, 3})), DimensionError);
}

TEST_CASE("Jacobi agrees with characteristic-polynomial roots on small matrices") {
  Rng rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = trial % 2 == 0 ? 2 : 3;
    const Tensor a = random_symmetric(rng, n);
    const EigenDecomposition e = jacobi_eigen(a);
    const oracle::Eigen o = oracle::characteristic_eigen(a);
    for (std::size_t k = 0; k < n; ++k) {
      CHECK(std::abs(e.values[k] - o.values[k]) <= 1e-10);
      CHECK(testing::max_abs_diff(column(e.vectors, k), o.vectors[k]) <= 1e-8);
    }
  }
}

TEST_CASE("Jacobi agrees with power iteration on 10x10 covariances") {
  Rng rng(22);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor cov = covariance(oracle::separated_dataset(rng, 200, 10));
    const EigenDecomposition e = jacobi_eigen(cov);
    const oracle::Eigen o = oracle::power_eigen(cov);
    for (std::size_t k = 0; k < 10; ++k) {
      CHECK(std::abs(e.values[k] - o.values[k]) <= 1e-8 * std::max(1.0, o.values[0]));
      CHECK(testing::max_abs_diff(column(e.vectors, k), o.vectors[k]) <= 1e-8);
    }
    // Orthonormal eigenvectors.
    for (std::size_t p = 0; p < 10; ++p)
      for (std::size_t q = 0; q < 10; ++q) {
        double dot = 0.0;
        for (std::size_t r = 0; r < 10; ++r) dot += e.vectors.at(r, p) * e.vectors.at(r, q);
        CHECK(dot == doctest::Approx(p == q ? 1.0 : 0.0).epsilon(1e-12).scale(1.0));
      }
  }
}

TEST_CASE("covariance uses the n-1 divisor") {
  const Tensor x(Shape{3, 2}, std::vector<double>{1, 2, 3, 4, 5, 9});
  const Tensor c = covariance(x);
  CHECK(c.at(0, 0) == doctest::Approx(4.0));
  CHECK(c.at(1, 1) == doctest::Approx(13.0));
  CHECK(c.at(0, 1) == doctest::Approx(7.0));
  CHECK(c.at(1, 0) == c.at(0, 1));
  CHECK_THROWS_AS(covariance(Tensor(Shape{1, 2})), ArgumentError);
}

TEST_CASE("projection variance equals eigenvalues") {
  Rng rng(23);
  const Tensor x = oracle::separated_dataset(rng, 150, 10);
  const FusionModel m = pca_fit(x, 4);
  CHECK(m.k() == 4);
  const Tensor p = pca_transform(x, m);
  CHECK(p.shape() == Shape{150, 4});
  const Tensor pc = covariance(p);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(pc.at(i, i) == doctest::Approx(m.eigenvalues[i]).epsilon(1e-10));
    for (std::size_t j = 0; j < 4; ++j)
      if (i != j) CHECK(std::abs(pc.at(i, j)) <= 1e-9 * m.eigenvalues[0]);
  }
  double mean0 = 0.0;
  for (std::size_t r = 0; r < 150; ++r) mean0 += p.at(r, 0);
  CHECK(std::abs(mean0 / 150.0) <= 1e-10);
}

TEST_CASE("full-rank reconstruction is exact and k selection follows explained variance") {
  Rng rng(24);
  const Tensor x = oracle::separated_dataset(rng, 40, 6);
  const FusionModel full = pca_fit(x, 6);
  for (std::size_t r = 0; r < 40; r += 7) {
    std::vector<double> row(6);
    for (std::size_t j = 0; j < 6; ++j) row[j] = x.at(r, j);
    CHECK(testing::max_abs_diff(pca_reconstruct(pca_transform(row, full), full), row) <= 1e-9);
  }
  const FusionModel autok = pca_fit(x);
  const auto ev = explained_variance(full);
  double below = 0.0;
  for (std::size_t i = 0; i + 1 < autok.k(); ++i) below += ev[i];
  CHECK(below < kDefaultExplainedVariance);
  CHECK(below + ev[autok.k() - 1] >= kDefaultExplainedVariance - 1e-12);

  CHECK(choose_components(std::vector<double>{5, 3, 2}, 10, 0.5) == 1);
  CHECK(choose_components(std::vector<double>{5, 3, 2}, 10, 0.8) == 2);
  CHECK(choose_components(std::vector<double>{5, 3, 2}, 10, 1.0) == 3);
  CHECK_THROWS_AS(pca_fit(x, 7), ArgumentError);
  CHECK_THROWS_AS(pca_transform(std::vector<double>(5), full), DimensionError);
}

TEST_CASE("two-point example and invariances") {
  const Tensor two(Shape{2, 2}, std::vector<double>{1, 1, -1, -1});
  const FusionModel m = pca_fit(two, 1);
  CHECK(m.eigenvalues[0] == doctest::Approx(4.0));
  CHECK(m.components.at(0, 0) == doctest::Approx(std::sqrt(0.5)));
  CHECK(m.components.at(1, 0) == doctest::Approx(std::sqrt(0.5)));
  CHECK(pca_transform(std::vector<double>{1, 1}, m)[0] == doctest::Approx(std::sqrt(2.0)));
  CHECK(pca_transform(m.mean, m)[0] == 0.0);

  Rng rng(25);
  const Tensor x = oracle::separated_dataset(rng, 30, 5);
  const FusionModel base = pca_fit(x, 5);

  // Duplicated rows rescale the covariance only.
  Tensor doubled({60, 5});
  for (std::size_t r = 0; r < 60; ++r)
    for (std::size_t j = 0; j < 5; ++j) doubled.at(r, j) = x.at(r % 30, j);
  const FusionModel dup = pca_fit(doubled, 5);
  CHECK(testing::max_abs_diff(dup.components.data(), base.components.data()) <= 1e-9);
  CHECK(dup.eigenvalues[0] == doctest::Approx(base.eigenvalues[0] * 29.0 * 60.0 / (30.0 * 59.0)));

  // A constant shift is absorbed by centering.
  Tensor shifted = x;
  for (std::size_t r = 0; r < 30; ++r)
    for (std::size_t j = 0; j < 5; ++j) shifted.at(r, j) += 10.0 * static_cast<double>(j + 1);
  const FusionModel sm = pca_fit(shifted, 3);
  const FusionModel bm = pca_fit(x, 3);
  CHECK(testing::max_abs_diff(pca_transform(shifted, sm).data(), pca_transform(x, bm).data()) <= 1e-9);

  // Whitened data: exactly zero-mean, identity covariance.
  Tensor white({4, 2}, 0.0);
  const double a = std::sqrt(1.5);
  white.at(0, 0) = a;
  white.at(1, 0) = -a;
  white.at(2, 1) = a;
  white.at(3, 1) = -a;
  const FusionModel w = pca_fit(white, 2);
  for (double l : w.eigenvalues) CHECK(l == doctest::Approx(1.0));

  const auto ev = explained_variance(base);
  double total = 0.0;
  for (std::size_t i = 0; i < ev.size(); ++i) {
    total += ev[i];
    if (i > 0) CHECK(ev[i] <= ev[i - 1]);
  }
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("isotropic data keeps all components at 95%") {
  // Rows +-e_i: the covariance is a multiple of the identity.
  Tensor x({8, 4});
  for (std::size_t i = 0; i < 4; ++i) {
    x.at(2 * i, i) = 1.0;
    x.at(2 * i + 1, i) = -1.0;
  }
  const FusionModel m = pca_fit(x);
  CHECK(m.k() == 4);
  for (double l : m.eigenvalues) CHECK(l == doctest::Approx(2.0 / 7.0));
}

}  // TEST_SUITE
