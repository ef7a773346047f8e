#include "snk/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

namespace snk {

std::string to_string(BoundKind k) {
  switch (k) {
    case BoundKind::inexact_newton: return "inexact-newton";
    case BoundKind::low_rank_newton: return "low-rank-newton";
    case BoundKind::newton_cg: return "newton-cg";
    case BoundKind::newton_gmres: return "newton-gmres";
    case BoundKind::newton_minres: return "newton-minres";
  }
  return "unknown";
}

BoundKind bound_kind_from_string(const std::string& s) {
  for (BoundKind k : all_bound_kinds()) {
    if (to_string(k) == s) return k;
  }
  throw ArgumentError("unknown bound kind '" + s + "'");
}

std::vector<BoundKind> all_bound_kinds() {
  return {BoundKind::inexact_newton, BoundKind::low_rank_newton, BoundKind::newton_cg,
          BoundKind::newton_gmres, BoundKind::newton_minres};
}

Vector regularized_stationary_point(const QuadraticProblem& problem) {
  // (Ā + γI) w = Ā w_c, solved in the eigenbasis of Ā.
  const DenseMatrix& q = problem.basis();
  const Vector& lambda = problem.spec().spectrum;
  const Vector coords = q.multiply_transposed(problem.w_star());
  Vector scaled(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const double denom = lambda[i] + problem.gamma();
    if (denom == 0.0) throw ArgumentError("regularized Hessian is singular");
    scaled[i] = lambda[i] * coords[i] / denom;
  }
  return q.multiply(scaled);
}

namespace {

std::size_t resolve(std::size_t n, std::size_t requested) { return requested == 0 ? n : requested; }

void check_inputs(const QuadraticProblem& problem, const OptimizerConfig& cfg,
                  const BoundOptions& options) {
  if (problem.gamma() != cfg.gamma) {
    throw ArgumentError("verify_bound: the problem and the config carry different gamma");
  }
  if (!(cfg.gamma > 0.0)) throw ArgumentError("verify_bound: gamma must be positive");
  const auto& spectrum = problem.spec().spectrum;
  if (*std::min_element(spectrum.begin(), spectrum.end()) < 0.0) {
    throw ArgumentError("verify_bound: the mean Hessian must be positive semidefinite");
  }
  if (options.trials < 2) throw ArgumentError("verify_bound: need at least two trials");
  if (options.distances.empty()) throw ArgumentError("verify_bound: no distances given");
  for (double delta : options.distances) {
    if (!(delta >= 0.0) || !std::isfinite(delta)) {
      throw ArgumentError("verify_bound: distances must be finite and non-negative");
    }
  }
  const std::size_t n = problem.sample_count();
  const std::size_t n_x = resolve(n, cfg.n_x);
  const std::size_t n_s = resolve(n_x, cfg.n_s);
  if (n_x > n || n_s > n_x) throw ArgumentError("verify_bound: batch sizes exceed the sample set");
  if (options.krylov_iterations == 0) throw ArgumentError("verify_bound: krylov_iterations must be positive");
}

struct Shape {
  std::size_t r;
  std::size_t p;
};

Shape low_rank_shape(std::size_t d, const OptimizerConfig& cfg) {
  const std::size_t r = std::min(cfg.rank, d);
  return {r, std::min(cfg.oversampling, d - r)};
}

// cosh(r·acosh(x)) for x ≥ 1.
double chebyshev(std::size_t r, double x) {
  return std::cosh(static_cast<double>(r) * std::acosh(std::max(x, 1.0)));
}

double one_step_error(BoundKind kind, const QuadraticProblem& problem, std::span<const double> w,
                      const Vector& w_star, const Batch& x, const Batch& s,
                      const OptimizerConfig& cfg, const BoundOptions& options, SeededRng& sketch) {
  Vector next;
  switch (kind) {
    case BoundKind::inexact_newton: {
      OptimizerConfig c = cfg;
      c.forcing.mode = ForcingSchedule::Mode::gradient_norm;
      c.krylov_max_iter = problem.dim();
      next = step_inkrylov(problem, w, x, s, c, KrylovMethod::cg).w_next;
      break;
    }
    case BoundKind::low_rank_newton:
      next = step_lrsfn(problem, w, x, s, cfg, sketch, true).w_next;
      break;
    case BoundKind::newton_cg:
    case BoundKind::newton_gmres:
    case BoundKind::newton_minres: {
      const KrylovMethod method = kind == BoundKind::newton_cg      ? KrylovMethod::cg
                                  : kind == BoundKind::newton_gmres ? KrylovMethod::gmres
                                                                    : KrylovMethod::minres;
      Vector rhs = problem.gradient(w, x);
      scale(-1.0, rhs);
      // eta = 0: the solver runs the full iteration count unless it converges exactly.
      const KrylovOutcome out = krylov_solve(method, hessian_operator(problem, w, s, true), rhs,
                                             0.0, options.krylov_iterations);
      next = add_scaled(w, cfg.alpha, out.step);
      break;
    }
  }
  Vector err = next;
  axpy(-1.0, w_star, err);
  return norm(err);
}

}  // namespace

BoundIngredients estimate_bound_ingredients(const QuadraticProblem& problem,
                                            const OptimizerConfig& cfg,
                                            const BoundOptions& options) {
  check_inputs(problem, cfg, options);
  const std::size_t d = problem.dim();
  const std::size_t n = problem.sample_count();
  const std::size_t n_x = resolve(n, cfg.n_x);
  const std::size_t n_s = resolve(n_x, cfg.n_s);
  const double gamma = cfg.gamma;
  const Vector w_star = regularized_stationary_point(problem);

  SeededRng root(options.seed);
  BoundIngredients ing;

  // Probe points: w* and a few points on each sphere |w − w*| = δ.
  SeededRng dir_rng = root.derive(1);
  std::vector<Vector> probes{w_star};
  for (double delta : options.distances) {
    for (std::size_t j = 0; j < options.directions_per_distance; ++j) {
      const Vector u = random_unit_vector(dir_rng, d);
      probes.push_back(add_scaled(w_star, delta, u));
    }
  }
  ConstantsOptions copts = options.constants;
  if (copts.hessian_batch == 0) copts.hessian_batch = n_s;
  SeededRng const_rng = root.derive(2);
  ing.estimated = estimate_assumption_constants(problem, probes, const_rng, copts);

  // Dense spectra of independently drawn batch Hessians.
  SeededRng draw_rng = root.derive(3);
  const std::size_t r = std::min(cfg.rank, d);
  double top_s = ing.estimated.L;
  double top_x = 0.0;
  double min_s = std::numeric_limits<double>::infinity();
  double sum_r = 0.0, sum_r_next = 0.0, sum_g = 0.0;
  for (std::size_t t = 0; t < options.spectrum_draws; ++t) {
    const Batch x = sample_batch(draw_rng, n, n_x, false);
    const Batch s = subsample(draw_rng, x, n_s);
    const SymEig es = sym_eig(problem.batch_hessian(s));
    const SymEig ex = sym_eig(problem.batch_hessian(x));
    top_s = std::max(top_s, std::abs(es.values.front()));
    top_x = std::max(top_x, std::abs(ex.values.front()));
    min_s = std::min(min_s, *std::min_element(es.values.begin(), es.values.end()));
    sum_r += es.values[r - 1];
    sum_r_next += r < d ? es.values[r] : 0.0;
    sum_g += norm(problem.monitor_gradient(w_star, x));
  }
  const double draws = static_cast<double>(std::max<std::size_t>(options.spectrum_draws, 1));
  // Bounds of the regularized subsampled Hessians.
  ing.L_s = top_s + gamma;
  ing.L_x = top_x + gamma;
  ing.eps_h = std::max(0.0, -min_s);
  ing.lambda_r = sum_r / draws;
  ing.lambda_r_next = sum_r_next / draws;
  ing.eps_g = sum_g / draws;

  const auto& spectrum = problem.spec().spectrum;
  const double lmax = *std::max_element(spectrum.begin(), spectrum.end());
  const double lmin = *std::min_element(spectrum.begin(), spectrum.end());
  ing.mu = std::min(1.0 / (lmax + gamma), 1.0 / (lmin + gamma));
  ing.kappa = (lmax + gamma) / (lmin + gamma);
  ing.error_factor = 1.0;
  return ing;
}

BoundCheckReport verify_bound(BoundKind kind, const QuadraticProblem& problem,
                              const OptimizerConfig& cfg, const BoundOptions& options) {
  return verify_bound(kind, problem, cfg, options, estimate_bound_ingredients(problem, cfg, options));
}

BoundCheckReport verify_bound(BoundKind kind, const QuadraticProblem& problem,
                              const OptimizerConfig& cfg, const BoundOptions& options,
                              const BoundIngredients& ingredients) {
  check_inputs(problem, cfg, options);
  if (cfg.alpha_policy != AlphaPolicy::fixed) {
    throw ArgumentError("verify_bound: the bounds hold for a fixed step length");
  }
  const std::size_t d = problem.dim();
  const std::size_t n = problem.sample_count();
  const std::size_t n_x = resolve(n, cfg.n_x);
  const std::size_t n_s = resolve(n_x, cfg.n_s);
  const double gamma = cfg.gamma;
  const double alpha = cfg.alpha;

  BoundCheckReport rep;
  rep.kind = kind;
  rep.ingredients = ingredients;
  rep.trials = options.trials;
  BoundIngredients& ing = rep.ingredients;

  const double L = ing.L_s;
  const double v = ing.estimated.v;
  const double sigma = ing.estimated.sigma;
  const double M = ing.estimated.M;
  const double mu = ing.mu;
  const double sqx = std::sqrt(static_cast<double>(n_x));
  const double sqs = std::sqrt(static_cast<double>(n_s));
  const double gap = gamma - ing.eps_h;
  const double delta_max = *std::max_element(options.distances.begin(), options.distances.end());

  const bool uses_gap = kind != BoundKind::low_rank_newton;
  if (uses_gap && !(gap > 0.0)) {
    rep.hypotheses_hold = false;
    rep.notes.push_back("gamma does not exceed the estimated eps_H");
  }

  switch (kind) {
    case BoundKind::inexact_newton: {
      if (!(delta_max < 2.0 * mu / L)) {
        rep.hypotheses_hold = false;
        rep.notes.push_back("largest distance is not below 2 mu / L");
      }
      if (cfg.forcing.eta_max >= 1.0) {
        rep.hypotheses_hold = false;
        rep.notes.push_back("eta_max must be below 1");
      }
      const double a = alpha * v / sqx;
      rep.c0 = (1.0 / gap) * a * (1.0 + v / sqx);
      rep.c1 = (1.0 / gap) * (L * std::abs(1.0 - alpha) + sigma / sqs + 2.0 * alpha * v * mu / sqx);
      rep.c2 = (1.0 / gap) * (M / 2.0 + alpha * mu * mu);
      break;
    }
    case BoundKind::low_rank_newton: {
      const Shape shape = low_rank_shape(d, cfg);
      if (shape.p < 2) {
        rep.hypotheses_hold = false;
        rep.notes.push_back("the randomized error factor needs oversampling of at least 2");
      }
      ing.error_factor =
          shape.p >= 2 ? 1.0 + 4.0 * std::sqrt(static_cast<double>(d * (shape.r + shape.p))) /
                                   static_cast<double>(shape.p - 1)
                       : std::numeric_limits<double>::infinity();
      const double denom = std::abs(ing.lambda_r + gamma);
      rep.c0 = alpha * v / (denom * sqx);
      rep.c1 = (1.0 / denom) * (L * std::abs(1.0 - alpha) +
                                ing.error_factor * std::abs(ing.lambda_r_next) + gamma + sigma / sqs);
      rep.c2 = M / (2.0 * denom);
      break;
    }
    case BoundKind::newton_cg: {
      const double sk = std::sqrt(ing.kappa);
      const double rho = std::pow((sk - 1.0) / (sk + 1.0), static_cast<double>(options.krylov_iterations));
      rep.c0 = alpha * v / (gap * sqx);
      rep.c1 = (1.0 / gap) * (L * std::abs(1.0 - alpha) + sigma / sqs + 2.0 * alpha * L * sk * rho);
      rep.c2 = M / (2.0 * gap);
      break;
    }
    case BoundKind::newton_gmres:
    case BoundKind::newton_minres: {
      const double r = static_cast<double>(options.krylov_iterations);
      if (kind == BoundKind::newton_gmres) {
        // The spectral inclusion slack ε is taken equal to ε_H.
        const double eps = ing.eps_h;
        const double a = (L - gamma + ing.eps_h) + 2.0 * eps;
        const double c = 0.5 * (L + gamma - ing.eps_h);
        const double dd = 0.5 * (L - gamma + ing.eps_h);
        ing.error_factor = dd > 0.0 ? (L / gap) * chebyshev(options.krylov_iterations, a / dd) /
                                          std::abs(chebyshev(options.krylov_iterations, c / dd))
                                    : std::numeric_limits<double>::infinity();
      } else {
        ing.error_factor = std::pow(std::max(0.0, 1.0 - gap * gap / (L * L)), r / 2.0);
      }
      const double E = ing.error_factor;
      rep.c0 = (alpha / gap) * (v / sqx + ing.eps_g * E / gap);
      rep.c1 = (1.0 / gap) * (L * std::abs(1.0 - alpha) + sigma / sqs + alpha * ing.L_x * E / gap);
      rep.c2 = M / (2.0 * gap);
      break;
    }
  }

  const Vector w_star = regularized_stationary_point(problem);
  SeededRng root(options.seed);
  SeededRng dir_rng = root.derive(4);
  for (std::size_t i = 0; i < options.distances.size(); ++i) {
    const double delta = options.distances[i];
    const Vector u = random_unit_vector(dir_rng, d);
    const Vector w = add_scaled(w_star, delta, u);
    SeededRng batch_rng = root.derive(10 + i);
    SeededRng sketch_rng = root.derive(1000 + i);
    double sum = 0.0, sum_sq = 0.0;
    std::vector<double> errors(options.trials);
    for (std::size_t t = 0; t < options.trials; ++t) {
      const Batch x = sample_batch(batch_rng, n, n_x, false);
      const Batch s = subsample(batch_rng, x, n_s);
      errors[t] = one_step_error(kind, problem, w, w_star, x, s, cfg, options, sketch_rng);
      sum += errors[t];
    }
    const double count = static_cast<double>(options.trials);
    const double mean = sum / count;
    for (double e : errors) sum_sq += (e - mean) * (e - mean);
    BoundRow row;
    row.delta = delta;
    row.mean = mean;
    row.std_error = std::sqrt(sum_sq / (count - 1.0)) / std::sqrt(count);
    row.bound = rep.c0 + rep.c1 * delta + rep.c2 * delta * delta;
    if (std::isnan(row.bound)) row.bound = std::numeric_limits<double>::infinity();
    row.violated = row.mean - 3.0 * row.std_error > row.bound;
    if (row.violated) ++rep.violations;
    rep.rows.push_back(row);
  }
  return rep;
}

std::string bound_report_json(const BoundCheckReport& report) {
  auto num = [](double x) -> nlohmann::json {
    if (std::isfinite(x)) return x;
    return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
  };
  const BoundIngredients& ing = report.ingredients;
  nlohmann::json j;
  j["kind"] = to_string(report.kind);
  j["c0"] = num(report.c0);
  j["c1"] = num(report.c1);
  j["c2"] = num(report.c2);
  j["trials"] = report.trials;
  j["violations"] = report.violations;
  j["hypotheses_hold"] = report.hypotheses_hold;
  j["notes"] = report.notes;
  j["constants"] = {{"L_data", num(ing.estimated.L)}, {"v", num(ing.estimated.v)},
                    {"sigma", num(ing.estimated.sigma)}, {"M", num(ing.estimated.M)},
                    {"L_s", num(ing.L_s)}, {"L_x", num(ing.L_x)}, {"eps_h", num(ing.eps_h)},
                    {"eps_g", num(ing.eps_g)}, {"lambda_r", num(ing.lambda_r)},
                    {"lambda_r_next", num(ing.lambda_r_next)}, {"mu", num(ing.mu)},
                    {"kappa", num(ing.kappa)}, {"error_factor", num(ing.error_factor)}};
  nlohmann::json rows = nlohmann::json::array();
  for (const BoundRow& r : report.rows) {
    rows.push_back({{"delta", r.delta}, {"mean", num(r.mean)}, {"std_error", num(r.std_error)},
                    {"bound", num(r.bound)}, {"violated", r.violated}});
  }
  j["rows"] = rows;
  return j.dump(2);
}

}  // namespace snk
