#include "snk/assumptions.hpp"

#include <algorithm>
#include <cmath>

#include "snk/lowrank.hpp"

namespace snk {

namespace {

double trace_gradient_covariance(const DifferentiableModel& model, const Vector& w) {
  const std::size_t n = model.sample_count();
  const Vector mean = model.monitor_gradient(w, model.full_batch());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vector gi = model.monitor_gradient(w, Batch{{i}});
    total += std::pow(norm(add_scaled(gi, -1.0, mean)), 2);
  }
  return total / static_cast<double>(n);
}

// Power iteration on v -> (1/N) Σ (H_i − H)² v.
double hessian_component_spread(const DifferentiableModel& model, const Vector& w,
                                SeededRng& rng, std::size_t iterations) {
  const std::size_t n = model.sample_count();
  const Batch all = model.full_batch();
  Vector v = random_unit_vector(rng, model.dim());
  double estimate = 0.0;
  for (std::size_t it = 0; it < iterations; ++it) {
    const Vector hv = model.data_hvp(w, all, v);
    Vector acc(model.dim(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const Batch one{{i}};
      Vector di = model.data_hvp(w, one, v);
      axpy(-1.0, hv, di);
      // Σ_i H (H_i − H) v vanishes, so only H_i d_i is accumulated.
      axpy(1.0, model.data_hvp(w, one, di), acc);
    }
    scale(1.0 / static_cast<double>(n), acc);
    estimate = dot(v, acc);
    const double an = norm(acc);
    if (an == 0.0) return 0.0;
    scale(1.0 / an, acc);
    v = std::move(acc);
  }
  return std::sqrt(std::max(estimate, 0.0));
}

}  // namespace

AssumptionConstants estimate_assumption_constants(const DifferentiableModel& model,
                                                  const std::vector<Vector>& probe_points,
                                                  SeededRng& rng,
                                                  const ConstantsOptions& options) {
  if (probe_points.size() < 2) {
    throw ArgumentError("estimate_assumption_constants: at least two probe points are needed for M");
  }
  const std::size_t d = model.dim();
  for (const Vector& w : probe_points) {
    if (w.size() != d) throw DimensionError("estimate_assumption_constants: probe has wrong length");
    if (!all_finite(w)) throw ArgumentError("estimate_assumption_constants: probe is not finite");
  }
  AssumptionConstants c;
  c.probes = probe_points.size();
  c.samples = model.sample_count();
  c.hessian_batch = options.hessian_batch == 0 ? model.sample_count()
                                               : std::min(options.hessian_batch, model.sample_count());
  c.hessian_draws = std::max<std::size_t>(options.hessian_draws, 1);

  const std::size_t p = std::min(options.oversampling, d > 1 ? d - 1 : 0);
  const std::size_t r = std::max<std::size_t>(1, std::min(options.rank, d - p));

  double v2 = 0.0;
  for (const Vector& w : probe_points) {
    for (std::size_t k = 0; k < c.hessian_draws; ++k) {
      const Batch s = sample_batch(rng, model.sample_count(), c.hessian_batch, false);
      const LowRankFactor f = randomized_eig(hessian_operator(model, w, s, false), r, p, rng);
      c.L = std::max(c.L, std::abs(f.lambdas.front()));
    }
    v2 = std::max(v2, trace_gradient_covariance(model, w));
    c.sigma = std::max(c.sigma, hessian_component_spread(model, w, rng, options.power_iterations));
  }
  c.v = std::sqrt(v2);

  const Batch all = model.full_batch();
  for (std::size_t a = 0; a < probe_points.size(); ++a) {
    for (std::size_t b = a + 1; b < probe_points.size(); ++b) {
      const double dist = norm(add_scaled(probe_points[a], -1.0, probe_points[b]));
      if (dist == 0.0) continue;
      ++c.lipschitz_pairs;
      for (std::size_t k = 0; k < options.directions; ++k) {
        const Vector u = random_unit_vector(rng, d);
        const Vector ha = model.data_hvp(probe_points[a], all, u);
        const Vector hb = model.data_hvp(probe_points[b], all, u);
        c.M = std::max(c.M, norm(add_scaled(ha, -1.0, hb)) / dist);
      }
    }
  }
  if (c.lipschitz_pairs == 0) {
    throw ArgumentError("estimate_assumption_constants: probe points must not all coincide");
  }
  return c;
}

}  // namespace snk
