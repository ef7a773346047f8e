#pragma once

#include <functional>
#include <iosfwd>

#include "snk/model.hpp"
#include "snk/numerics.hpp"

namespace snk {

// Symmetric linear map on R^d given only by its action.
struct LinearOperator {
  std::size_t dim = 0;
  std::function<Vector(std::span<const double>)> apply;

  Vector operator()(std::span<const double> v) const { return apply(v); }
};

LinearOperator matrix_operator(const DenseMatrix& a);
// v -> ∇²F̄_batch(w) v, with or without the Tikhonov shift.  Captures the
// model, w and batch by reference; they must outlive the operator.
LinearOperator hessian_operator(const DifferentiableModel& model, std::span<const double> w,
                                const Batch& batch, bool regularized);

struct LowRankFactor {
  DenseMatrix U;       // d × r, orthonormal columns
  Vector lambdas;      // length r, descending magnitude
  std::size_t oversampling = 0;
  Vector discarded;    // the projected eigenvalues that were not retained

  std::size_t rank() const { return lambdas.size(); }
  std::size_t dim() const { return U.rows(); }
};

// Double-pass randomized eigendecomposition: 2(r+p) operator applications.
// Requires r ≥ 1 and r + p ≤ d, and p ≥ 2 unless r + p = d (the sketch then
// spans the whole space and no oversampling is possible).  Sketch columns
// that collapse under orthogonalization (operators of rank < r+p) are
// replaced by fresh Gaussian directions.
LowRankFactor randomized_eig(const LinearOperator& op, std::size_t r, std::size_t p,
                             SeededRng& rng);

// p = −[(1/γ)I − (1/γ²)U(Λ̃⁻¹ + (1/γ)I)⁻¹Uᵀ] g with Λ̃ = Λ or |Λ|, i.e. the
// solution of (UΛ̃Uᵀ + γI) p = −g.  No operator applications.
Vector smw_solve(const LowRankFactor& factor, double gamma, std::span<const double> g, bool flip);

LowRankFactor flip_spectrum(const LowRankFactor& factor);

// Smallest retained eigenvalue.  Only a certificate within span(U).
double min_eig_estimate(const LowRankFactor& factor);

// Rows `iteration,rank_index,eigenvalue`.
void write_spectrum_header(std::ostream& out);
void write_spectrum_rows(std::ostream& out, std::size_t iteration, const LowRankFactor& factor);

// Dense UΛUᵀ, for tests and diagnostics.
DenseMatrix reconstruct(const LowRankFactor& factor);

}  // namespace snk
