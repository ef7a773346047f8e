#pragma once

#include <string>
#include <vector>

#include "snk/assumptions.hpp"
#include "snk/optimizer.hpp"
#include "snk/problems.hpp"

namespace snk {

// One-step local convergence bounds E‖w₁ − w*‖ ≤ c₀ + c₁δ + c₂δ², one per
// method family.
enum class BoundKind {
  inexact_newton,  // Krylov solve to the gradient-norm forcing tolerance
  low_rank_newton, // randomized low-rank factor + Woodbury solve
  newton_cg,       // fixed number of CG iterations
  newton_gmres,    // fixed number of GMRES iterations
  newton_minres,   // fixed number of MINRES iterations
};

std::string to_string(BoundKind k);
BoundKind bound_kind_from_string(const std::string& s);
std::vector<BoundKind> all_bound_kinds();

struct BoundOptions {
  std::size_t trials = 1000;
  std::vector<double> distances{0.01, 0.1, 1.0};
  std::size_t krylov_iterations = 20;  // fixed-iteration Krylov methods
  std::size_t spectrum_draws = 200;    // batch Hessians for ε_H, λ̄_r, λ̄_{r+1}, L_{N_X}
  std::size_t directions_per_distance = 2;  // probe points per distance for the constants
  std::uint64_t seed = 7;
  ConstantsOptions constants;
};

struct BoundRow {
  double delta = 0.0;
  double mean = 0.0;      // empirical E‖w₁ − w*‖
  double std_error = 0.0;
  double bound = 0.0;     // c₀ + c₁δ + c₂δ²
  bool violated = false;  // mean − 3·SE > bound
};

struct BoundIngredients {
  AssumptionConstants estimated;  // data-term constants at the probe points
  double L_s = 0.0;      // spectral bound of ∇²F̄_S (regularized) used in the bound
  double L_x = 0.0;      // same for gradient-sized batches
  double eps_h = 0.0;    // max over draws of −λ_min(∇²F_S), floored at 0
  double eps_g = 0.0;    // mean ‖∇F̄_X(w*)‖
  double lambda_r = 0.0;       // mean r-th eigenvalue of ∇²F_S
  double lambda_r_next = 0.0;  // mean (r+1)-th eigenvalue
  double mu = 0.0;       // min{‖H + γI‖⁻¹, ‖(H + γI)⁻¹‖} at w*
  double kappa = 0.0;    // condition number of H + γI at w*
  double error_factor = 0.0;  // the method's approximation factor (1 when unused)
};

struct BoundCheckReport {
  BoundKind kind = BoundKind::inexact_newton;
  BoundIngredients ingredients;
  double c0 = 0.0, c1 = 0.0, c2 = 0.0;
  std::vector<BoundRow> rows;
  std::size_t violations = 0;
  std::size_t trials = 0;
  bool hypotheses_hold = true;
  std::vector<std::string> notes;  // hypotheses that fail, substitutions made
};

// w* is the stationary point of the regularized risk, (Ā + γI)⁻¹ Ā w_c for
// the problem centre w_c.  The problem must be PSD in the mean, carry the
// same γ as cfg, and cfg.alpha_policy must be fixed.
BoundCheckReport verify_bound(BoundKind kind, const QuadraticProblem& problem,
                              const OptimizerConfig& cfg, const BoundOptions& options);

// Ingredients are shared across kinds; computing them once saves time when
// several kinds are checked on one problem.
BoundIngredients estimate_bound_ingredients(const QuadraticProblem& problem,
                                            const OptimizerConfig& cfg,
                                            const BoundOptions& options);
BoundCheckReport verify_bound(BoundKind kind, const QuadraticProblem& problem,
                              const OptimizerConfig& cfg, const BoundOptions& options,
                              const BoundIngredients& ingredients);

// Stationary point of the regularized mean risk.
Vector regularized_stationary_point(const QuadraticProblem& problem);

std::string bound_report_json(const BoundCheckReport& report);

}  // namespace snk
