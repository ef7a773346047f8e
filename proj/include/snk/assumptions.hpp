#pragma once

#include <vector>

#include "snk/model.hpp"

namespace snk {

struct ConstantsOptions {
  std::size_t hessian_batch = 0;    // N_S for L̂; 0 means the full sample set
  std::size_t hessian_draws = 10;   // subsampled Hessians per probe for L̂
  std::size_t rank = 4;             // randomized eigendecomposition rank for L̂
  std::size_t oversampling = 5;
  std::size_t power_iterations = 30;
  std::size_t directions = 4;       // random directions per probe pair for M̂
};

// Empirical stand-ins for the constants of the standing assumptions:
//   L   spectral bound of subsampled data Hessians
//   v   v² = tr Cov(∇F_i)
//   σ   σ² = ‖E[(∇²F_i − ∇²F)²]‖
//   M   Lipschitz constant of the Hessian (‖w − z‖ to the first power)
// Each is a maximum over probe points.  Regularization is excluded: it
// cancels from v, σ and M, and L is reported for the data term alone.
struct AssumptionConstants {
  double L = 0.0;
  double v = 0.0;
  double sigma = 0.0;
  double M = 0.0;
  std::size_t probes = 0;
  std::size_t hessian_batch = 0;
  std::size_t hessian_draws = 0;
  std::size_t samples = 0;       // component gradients/Hessians per probe for v̂, σ̂
  std::size_t lipschitz_pairs = 0;
};

AssumptionConstants estimate_assumption_constants(const DifferentiableModel& model,
                                                  const std::vector<Vector>& probe_points,
                                                  SeededRng& rng,
                                                  const ConstantsOptions& options = {});

}  // namespace snk
