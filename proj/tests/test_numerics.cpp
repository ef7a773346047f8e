#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "snk/numerics.hpp"

using namespace snk;

TEST_CASE("dot on small inputs") {
  CHECK(dot(Vector{1, 2}, Vector{3, 4}) == 11.0);
  CHECK(dot(Vector{1.5, -2, 7}, Vector{0, 0, 0}) == 0.0);
  CHECK_THROWS_AS(dot(Vector{1, 2}, Vector{1}), DimensionError);
}

TEST_CASE("dot matches a naive loop on random vectors") {
  SeededRng rng(3);
  const Vector a = gaussian_vector(rng, 100), b = gaussian_vector(rng, 100);
  long double s = 0.0L;
  for (std::size_t i = 0; i < 100; ++i) s += static_cast<long double>(a[i]) * b[i];
  CHECK(std::abs(dot(a, b) - static_cast<double>(s)) <= 1e-14 * std::abs(static_cast<double>(s)) + 1e-15);
  CHECK(dot(a, b) == dot(b, a));
}

TEST_CASE("axpy, scale and add_scaled") {
  Vector y{1, 1};
  axpy(2.0, Vector{1, -1}, y);
  CHECK(y == Vector{3, -1});
  scale(0.5, y);
  CHECK(y == Vector{1.5, -0.5});
  CHECK(add_scaled(Vector{1, 2}, -1.0, Vector{1, 1}) == Vector{0, 1});
  CHECK(norm(Vector{3, 4}) == doctest::Approx(5.0));
  CHECK_FALSE(all_finite(Vector{1, NAN}));
}

TEST_CASE("thin_qr keeps an orthonormal input") {
  SeededRng rng(5);
  const DenseMatrix q0 = thin_qr(gaussian_matrix(rng, 12, 4));
  const DenseMatrix q = thin_qr(q0);
  CHECK(test::max_abs_diff(q.transpose() * q, DenseMatrix::identity(4)) <= 1e-12);
  // Same span: projecting q0 onto span(q) loses nothing.
  const DenseMatrix resid = q0 - q * (q.transpose() * q0);
  CHECK(resid.max_abs() <= 1e-12);
}

TEST_CASE("thin_qr on scaled coordinate columns") {
  const DenseMatrix a(3, 2, {2, 0, 0, 3, 0, 0});
  const DenseMatrix q = thin_qr(a);
  CHECK(std::abs(q(0, 0)) == doctest::Approx(1.0));
  CHECK(std::abs(q(1, 1)) == doctest::Approx(1.0));
  CHECK(q(1, 0) == 0.0);
  CHECK(q(2, 0) == 0.0);
  CHECK(q(0, 1) == 0.0);
  CHECK(q(2, 1) == 0.0);
}

TEST_CASE("thin_qr projection residual on a Gaussian matrix") {
  SeededRng rng(8);
  const DenseMatrix a = gaussian_matrix(rng, 50, 10);
  const DenseMatrix q = thin_qr(a);
  CHECK(test::max_abs_diff(q.transpose() * q, DenseMatrix::identity(10)) <= 1e-12);
  const DenseMatrix resid = a - q * (q.transpose() * a);
  CHECK(resid.max_abs() <= 1e-10);
}

TEST_CASE("thin_qr rejects rank-deficient input") {
  DenseMatrix a(4, 2);
  for (std::size_t i = 0; i < 4; ++i) a(i, 0) = a(i, 1) = static_cast<double>(i + 1);
  CHECK_THROWS_AS(thin_qr(a), DegenerateSketchError);
}

TEST_CASE("thin_qr output gives unit Gram eigenvalues") {
  SeededRng rng(21);
  for (auto [d, k] : {std::pair<std::size_t, std::size_t>{5, 5}, {40, 7}, {200, 30}}) {
    const DenseMatrix q = thin_qr(gaussian_matrix(rng, d, k));
    for (double v : sym_eig(q.transpose() * q).values) CHECK(std::abs(v - 1.0) <= 1e-10);
  }
}

TEST_CASE("sym_eig on a diagonal matrix") {
  const Vector diag{-5, 3, 1};
  const SymEig e = sym_eig(DenseMatrix::diagonal(diag));
  CHECK(e.values == Vector{-5, 3, 1});
  CHECK(std::abs(e.vectors(0, 0)) == 1.0);
  CHECK(std::abs(e.vectors(1, 1)) == 1.0);
  CHECK(std::abs(e.vectors(2, 2)) == 1.0);
}

TEST_CASE("sym_eig on the identity") {
  const SymEig e = sym_eig(DenseMatrix::identity(4));
  for (double v : e.values) CHECK(v == doctest::Approx(1.0));
  CHECK(test::max_abs_diff(e.vectors.transpose() * e.vectors, DenseMatrix::identity(4)) <= 1e-12);
}

TEST_CASE("sym_eig reconstructs a random symmetric matrix") {
  SeededRng rng(13);
  const DenseMatrix a = test::random_symmetric(rng, 30);
  const SymEig e = sym_eig(a);
  const DenseMatrix rec = e.vectors * DenseMatrix::diagonal(e.values) * e.vectors.transpose();
  CHECK(test::max_abs_diff(rec, a) <= 1e-9);
  CHECK(test::max_abs_diff(e.vectors.transpose() * e.vectors, DenseMatrix::identity(30)) <= 1e-10);
  for (std::size_t i = 1; i < 30; ++i) CHECK(std::abs(e.values[i - 1]) >= std::abs(e.values[i]));
  for (std::size_t j = 0; j < 30; ++j) {
    const Vector v = e.vectors.column(j);
    const Vector av = a.multiply(v);
    for (std::size_t i = 0; i < 30; ++i) {
      CHECK(std::abs(av[i] - e.values[j] * v[i]) <= 1e-10 * symmetric_spectral_norm(a));
    }
  }
}

TEST_CASE("sym_eig agrees with characteristic polynomial roots") {
  // [[2,1],[1,2]]: roots 3 and 1.
  const SymEig e2 = sym_eig(DenseMatrix(2, 2, {2, 1, 1, 2}));
  CHECK(std::abs(e2.values[0] - 3.0) <= 1e-12);
  CHECK(std::abs(e2.values[1] - 1.0) <= 1e-12);
  // [[2,-1,0],[-1,2,-1],[0,-1,2]]: roots 2+√2, 2, 2−√2.
  const SymEig e3 = sym_eig(DenseMatrix(3, 3, {2, -1, 0, -1, 2, -1, 0, -1, 2}));
  CHECK(std::abs(e3.values[0] - (2 + std::sqrt(2.0))) <= 1e-12);
  CHECK(std::abs(e3.values[1] - 2.0) <= 1e-12);
  CHECK(std::abs(e3.values[2] - (2 - std::sqrt(2.0))) <= 1e-12);
  // [[0,1],[1,0]]: ±1, positive first on the tie.
  const SymEig e4 = sym_eig(DenseMatrix(2, 2, {0, 1, 1, 0}));
  CHECK(e4.values[0] == doctest::Approx(1.0));
  CHECK(e4.values[1] == doctest::Approx(-1.0));
}

TEST_CASE("sym_eig rejects non-symmetric input") {
  CHECK_THROWS_AS(sym_eig(DenseMatrix(2, 2, {1, 2, 0, 1})), ContractError);
}

TEST_CASE("gaussian_matrix is reproducible and standard normal") {
  SeededRng a(42), b(42);
  const DenseMatrix ma = gaussian_matrix(a, 7, 3), mb = gaussian_matrix(b, 7, 3);
  CHECK(std::equal(ma.entries().begin(), ma.entries().end(), mb.entries().begin()));

  SeededRng rng(99);
  const DenseMatrix big = gaussian_matrix(rng, 1000, 100);
  double mean = 0.0;
  for (double x : big.entries()) mean += x;
  mean /= 1e5;
  double var = 0.0;
  for (double x : big.entries()) var += (x - mean) * (x - mean);
  var /= 1e5 - 1;
  CHECK(std::abs(mean) <= 0.02);
  CHECK(std::abs(var - 1.0) <= 0.03);

  SeededRng one(1);
  const DenseMatrix tiny = gaussian_matrix(one, 1, 1);
  CHECK(std::isfinite(tiny(0, 0)));
}

TEST_CASE("derived streams differ from each other and repeat") {
  SeededRng root(5);
  SeededRng s1 = root.derive(1), s1b = root.derive(1), s2 = root.derive(2);
  const auto x = s1.next_u64();
  CHECK(x == s1b.next_u64());
  CHECK(x != s2.next_u64());
  SeededRng u(3);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK((v >= 0.0 && v < 1.0));
    CHECK(u.uniform_index(7) < 7);
  }
}
