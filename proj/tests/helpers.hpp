#pragma once

#include <algorithm>
#include <cmath>

#include "snk/numerics.hpp"

namespace snk::test {

// Random symmetric matrix with the given eigenvalues: Q diag(λ) Qᵀ.
inline DenseMatrix with_spectrum(SeededRng& rng, const Vector& lambdas) {
  const std::size_t d = lambdas.size();
  const DenseMatrix q = thin_qr(gaussian_matrix(rng, d, d));
  DenseMatrix a(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += q(i, k) * lambdas[k] * q(j, k);
      a(i, j) = s;
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) a(j, i) = a(i, j) = 0.5 * (a(i, j) + a(j, i));
  }
  return a;
}

inline DenseMatrix random_symmetric(SeededRng& rng, std::size_t d) {
  DenseMatrix g = gaussian_matrix(rng, d, d);
  DenseMatrix a(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) a(i, j) = 0.5 * (g(i, j) + g(j, i));
  }
  return a;
}

// Dense solve by Gaussian elimination with partial pivoting.
inline Vector dense_solve(DenseMatrix a, Vector b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    }
    for (std::size_t j = 0; j < n; ++j) std::swap(a(c, j), a(piv, j));
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a(r, c) / a(c, c);
      for (std::size_t j = c; j < n; ++j) a(r, j) -= f * a(c, j);
      b[r] -= f * b[c];
    }
  }
  Vector x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= a(i, j) * x[j];
    x[i] = s / a(i, i);
  }
  return x;
}

inline double rel_diff(const Vector& a, const Vector& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

inline double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) m = std::max(m, std::abs(a(i, j) - b(i, j)));
  }
  return m;
}

}  // namespace snk::test
