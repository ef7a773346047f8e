#include "snk/lowrank.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace snk {

LinearOperator matrix_operator(const DenseMatrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("matrix_operator: matrix must be square");
  return {a.rows(), [a](std::span<const double> v) { return a.multiply(v); }};
}

LinearOperator hessian_operator(const DifferentiableModel& model, std::span<const double> w,
                                const Batch& batch, bool regularized) {
  return {model.dim(), [&model, w, &batch, regularized](std::span<const double> v) {
            return regularized ? model.hvp(w, batch, v) : model.data_hvp(w, batch, v);
          }};
}

namespace {

// Orthogonalize v against the first `count` columns of q (two passes of MGS).
void orthogonalize(const DenseMatrix& q, std::size_t count, Vector& v) {
  const std::size_t d = q.rows();
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t j = 0; j < count; ++j) {
      double c = 0.0;
      for (std::size_t i = 0; i < d; ++i) c += q(i, j) * v[i];
      for (std::size_t i = 0; i < d; ++i) v[i] -= c * q(i, j);
    }
  }
}

}  // namespace

LowRankFactor randomized_eig(const LinearOperator& op, std::size_t r, std::size_t p,
                             SeededRng& rng) {
  const std::size_t d = op.dim;
  const std::size_t k = r + p;
  if (r < 1) throw ArgumentError("randomized_eig: rank must be at least 1");
  if (k > d) {
    throw ArgumentError("randomized_eig: r + p = " + std::to_string(k) + " exceeds d = " +
                        std::to_string(d));
  }
  if (p < 2 && k != d) throw ArgumentError("randomized_eig: oversampling p must be at least 2");

  const DenseMatrix omega = gaussian_matrix(rng, d, k);
  DenseMatrix y(d, k);
  double max_norm = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    const Vector yj = op(omega.column(j));
    if (yj.size() != d) throw DimensionError("randomized_eig: operator returned wrong length");
    if (!all_finite(yj)) throw NumericalError("randomized_eig: operator produced non-finite values");
    y.set_column(j, yj);
    max_norm = std::max(max_norm, norm(yj));
  }

  // Orthonormal basis of range(Y), completing collapsed columns.
  DenseMatrix q(d, k);
  const double tol = 1e-10 * max_norm;
  for (std::size_t j = 0; j < k; ++j) {
    Vector v = y.column(j);
    orthogonalize(q, j, v);
    double n = norm(v);
    if (!(n > tol)) {
      n = 0.0;
      for (int attempt = 0; attempt < 8 && !(n > 1e-8); ++attempt) {
        v = gaussian_vector(rng, d);
        orthogonalize(q, j, v);
        n = norm(v) / std::sqrt(static_cast<double>(d));
      }
      if (!(n > 1e-8)) {
        throw DegenerateSketchError("randomized_eig: could not complete the sketch basis; "
                                    "try a larger oversampling p");
      }
      n = norm(v);
    }
    scale(1.0 / n, v);
    q.set_column(j, v);
  }

  // Second pass.
  DenseMatrix hq(d, k);
  for (std::size_t j = 0; j < k; ++j) {
    const Vector c = op(q.column(j));
    if (!all_finite(c)) throw NumericalError("randomized_eig: operator produced non-finite values");
    hq.set_column(j, c);
  }
  DenseMatrix t = q.transpose() * hq;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const double s = 0.5 * (t(i, j) + t(j, i));
      t(i, j) = s;
      t(j, i) = s;
    }
  }
  const SymEig eig = sym_eig(t);

  LowRankFactor f;
  f.oversampling = p;
  f.lambdas.assign(eig.values.begin(), eig.values.begin() + static_cast<std::ptrdiff_t>(r));
  f.discarded.assign(eig.values.begin() + static_cast<std::ptrdiff_t>(r), eig.values.end());
  DenseMatrix vr(k, r);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < r; ++j) vr(i, j) = eig.vectors(i, j);
  }
  f.U = q * vr;
  return f;
}

Vector smw_solve(const LowRankFactor& factor, double gamma, std::span<const double> g, bool flip) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw ArgumentError("smw_solve: gamma must be positive and finite");
  }
  const std::size_t d = g.size();
  const std::size_t r = factor.rank();
  if (r > 0 && factor.U.rows() != d) throw DimensionError("smw_solve: factor and gradient differ in length");

  Vector inv(r);
  for (std::size_t i = 0; i < r; ++i) {
    const double lam = flip ? std::abs(factor.lambdas[i]) : factor.lambdas[i];
    if (std::abs(gamma + lam) < 1e-12 * std::max(1.0, std::abs(lam))) {
      throw RegularizationError("smw_solve: gamma + lambda vanishes for lambda = " +
                                    std::to_string(factor.lambdas[i]),
                                factor.lambdas[i]);
    }
    inv[i] = 1.0 / (lam + gamma);
  }
  // p = −U(Λ̃ + γI)⁻¹c − (1/γ)(g − Uc) with c = Uᵀg.  Same as the Woodbury
  // expression, without its cancellation when γ is small.
  Vector p(g.begin(), g.end());
  if (r > 0) {
    const Vector c = factor.U.multiply_transposed(g);
    if (r == d) {
      // span(U) is everything; the complement term is rounding noise times 1/γ.
      std::fill(p.begin(), p.end(), 0.0);
    } else {
      axpy(-1.0, factor.U.multiply(c), p);
      scale(-1.0 / gamma, p);
    }
    Vector scaled(r);
    for (std::size_t i = 0; i < r; ++i) scaled[i] = c[i] * inv[i];
    axpy(-1.0, factor.U.multiply(scaled), p);
  } else {
    scale(-1.0 / gamma, p);
  }
  return p;
}

LowRankFactor flip_spectrum(const LowRankFactor& factor) {
  LowRankFactor f = factor;
  for (double& l : f.lambdas) l = std::abs(l);
  return f;
}

double min_eig_estimate(const LowRankFactor& factor) {
  if (factor.lambdas.empty()) throw ArgumentError("min_eig_estimate: empty factor");
  return *std::min_element(factor.lambdas.begin(), factor.lambdas.end());
}

void write_spectrum_header(std::ostream& out) { out << "iteration,rank_index,eigenvalue\n"; }

void write_spectrum_rows(std::ostream& out, std::size_t iteration, const LowRankFactor& factor) {
  char buf[40];
  for (std::size_t i = 0; i < factor.rank(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", factor.lambdas[i]);
    out << iteration << ',' << i << ',' << buf << '\n';
  }
}

DenseMatrix reconstruct(const LowRankFactor& factor) {
  DenseMatrix ul = factor.U;
  for (std::size_t i = 0; i < ul.rows(); ++i) {
    for (std::size_t j = 0; j < ul.cols(); ++j) ul(i, j) *= factor.lambdas[j];
  }
  return ul * factor.U.transpose();
}

}  // namespace snk
