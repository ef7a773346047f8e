#pragma once

#include <string>

#include "snk/lowrank.hpp"

namespace snk {

struct ForcingSchedule {
  enum class Mode { gradient_norm, constant };
  Mode mode = Mode::gradient_norm;
  double eta_max = 0.5;
  double eta_const = 0.1;
};

// gradient_norm: min(eta_max, grad_norm).  constant: eta_const.
double forcing_eta(const ForcingSchedule& schedule, double grad_norm);

enum class Termination { tolerance, max_iterations, negative_curvature, breakdown };
std::string to_string(Termination t);

struct KrylovOutcome {
  Vector step;
  double residual_norm = 0.0;  // ‖b − op(step)‖ as tracked by the solver
  std::size_t iterations = 0;  // operator applications
  Termination termination = Termination::tolerance;
  // Smallest vᵀHv/vᵀv seen over search directions (CG) or basis vectors
  // (MINRES, GMRES).  +inf when no operator application happened.
  double min_rayleigh = 0.0;
  Vector residual_history;     // starts with ‖b‖
  std::string diagnostic;
};

// Each solver approximates op(p) = b from p₀ = 0 and stops once
// ‖b − op(p)‖ ≤ eta‖b‖, after max_iter operator applications, on negative
// curvature, or on breakdown.  max_iter = 0 selects min(d, 100).
//
// The stopping test uses a residual accumulated from the stored operator
// images rather than the short recurrence, and aims slightly under eta‖b‖,
// so a re-measured residual satisfies the tolerance too.
KrylovOutcome cg_solve(const LinearOperator& op, std::span<const double> b, double eta,
                       std::size_t max_iter = 0);
KrylovOutcome minres_solve(const LinearOperator& op, std::span<const double> b, double eta,
                           std::size_t max_iter = 0);
KrylovOutcome gmres_solve(const LinearOperator& op, std::span<const double> b, double eta,
                          std::size_t max_iter = 0);

enum class KrylovMethod { cg, minres, gmres };
KrylovOutcome krylov_solve(KrylovMethod method, const LinearOperator& op,
                           std::span<const double> b, double eta, std::size_t max_iter = 0);

struct PolynomialCheckReport {
  std::size_t samples = 0;
  double cg_error_sq = 0.0;        // ‖x* − x_m‖²_A
  double cg_min_sampled = 0.0;     // min over sampled q of Σ λ q(λ)² (uᵀe₀)²
  std::size_t cg_violations = 0;   // samples whose sum fell below the CG error
  double gmres_residual_sq = 0.0;  // ‖b − A x_m‖²
  double gmres_min_sampled = 0.0;  // min over sampled q of Σ q(λ)² (uᵀr₀)²
  std::size_t gmres_violations = 0;
  bool passed() const { return cg_violations == 0 && gmres_violations == 0; }
};

// Checks the polynomial characterization of the m-th CG and GMRES iterates on
// a small dense SPD matrix.  Polynomials q with q(0) = 1 are drawn with
// random roots spread over the spectral interval.
PolynomialCheckReport krylov_polynomial_check(const DenseMatrix& a, std::span<const double> b,
                                              std::size_t m, SeededRng& rng,
                                              std::size_t samples = 200);

}  // namespace snk
