#include "snk/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>

#include "snk/config_io.hpp"

namespace snk {

std::string to_string(Method m) {
  switch (m) {
    case Method::lrsfn: return "lrsfn";
    case Method::lr_newton: return "lr-newton";
    case Method::incg: return "incg";
    case Method::inminres: return "inminres";
    case Method::ingmres: return "ingmres";
    case Method::gd: return "gd";
    case Method::sgd: return "sgd";
    case Method::adam: return "adam";
  }
  return "unknown";
}

Method method_from_string(const std::string& s) {
  for (Method m : {Method::lrsfn, Method::lr_newton, Method::incg, Method::inminres,
                   Method::ingmres, Method::gd, Method::sgd, Method::adam}) {
    if (to_string(m) == s) return m;
  }
  throw ArgumentError("unknown method '" + s +
                      "' (expected lrsfn, lr-newton, incg, inminres, ingmres, gd, sgd or adam)");
}

bool is_newton(Method m) {
  return m == Method::lrsfn || m == Method::lr_newton || m == Method::incg ||
         m == Method::inminres || m == Method::ingmres;
}

std::string to_string(RunStatus s) {
  switch (s) {
    case RunStatus::budget_exhausted: return "budget_exhausted";
    case RunStatus::iteration_limit: return "iteration_limit";
    case RunStatus::stationary: return "stationary";
    case RunStatus::failed: return "failed";
  }
  return "unknown";
}

void OptimizerConfig::validate() const {
  auto fail = [](const std::string& m) { throw ArgumentError("optimizer config: " + m); };
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) fail("gamma must be finite and non-negative");
  if (!(eps_g > 0.0) || !(eps_h > 0.0)) fail("eps_g and eps_h must be positive");
  if (is_newton(method) && !(gamma > eps_h)) fail("Newton methods need gamma > eps_h");
  if ((method == Method::lrsfn || method == Method::lr_newton) && rank == 0) fail("rank must be at least 1");
  if (n_x != 0 && n_s > n_x) fail("n_s must not exceed n_x");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) fail("alpha must be positive");
  if (!(max_sweeps >= 0.0)) fail("max_sweeps must be non-negative");
  if (!(stochastic_fraction > 0.0) || stochastic_fraction > 1.0) fail("stochastic_fraction must lie in (0, 1]");
  if (!(init_scale >= 0.0)) fail("init_scale must be non-negative");
  if (forcing.mode == ForcingSchedule::Mode::gradient_norm &&
      !(forcing.eta_max > 0.0 && forcing.eta_max < 1.0)) {
    fail("eta_max must lie in (0, 1)");
  }
  if (forcing.mode == ForcingSchedule::Mode::constant && !(forcing.eta_const > 0.0)) {
    fail("eta_const must be positive");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) ||
      !(adam_epsilon > 0.0)) {
    fail("adam parameters out of range");
  }
}

// ---------------------------------------------------------------------------

LineSearchResult line_search(const DifferentiableModel& model, std::span<const double> w,
                             std::span<const double> p, std::span<const double> g, double f0,
                             const Batch& batch, double alpha0, bool take_best) {
  constexpr double kC1 = 1e-4;
  constexpr int kTrials = 11;  // α₀ and ten halvings
  const double slope = dot(g, p);
  LineSearchResult res;
  double alpha = alpha0;
  double last_finite = std::numeric_limits<double>::quiet_NaN();
  double best_alpha = std::numeric_limits<double>::quiet_NaN();
  double best_value = std::numeric_limits<double>::infinity();
  for (int t = 0; t < kTrials; ++t, alpha *= 0.5) {
    const Vector trial = add_scaled(w, alpha, p);
    ++res.evals;
    double f;
    try {
      f = model.loss(trial, batch);
    } catch (const NonFiniteLossError&) {
      continue;
    }
    last_finite = alpha;
    if (f < best_value) {
      best_value = f;
      best_alpha = alpha;
    }
    if (f <= f0 + kC1 * alpha * slope) {
      res.alpha = alpha;
      res.armijo_satisfied = true;
      return res;
    }
  }
  if (std::isnan(last_finite)) {
    throw StepRejectionError("line search: every trial loss was non-finite", alpha * 2.0, norm(p));
  }
  res.armijo_satisfied = false;
  // The last trial is 2⁻¹⁰ α₀ unless it was non-finite.
  res.alpha = take_best ? best_alpha : last_finite;
  return res;
}

bool check_stationary(double grad_norm, double min_eig_estimate, const OptimizerConfig& cfg) {
  return grad_norm <= cfg.eps_g && min_eig_estimate >= -cfg.eps_h;
}

namespace {

struct LowRankShape {
  std::size_t r;
  std::size_t p;
};

// r ≤ d, and p trimmed so that r + p ≤ d.
LowRankShape low_rank_shape(std::size_t d, std::size_t rank, std::size_t oversampling) {
  const std::size_t r = std::min(rank, d);
  return {r, std::min(oversampling, d - r)};
}

// Applies the step policy and fills the common record fields.
StepResult finish_step(const DifferentiableModel& model, std::span<const double> w,
                       const Vector& p, const ValueAndGradient& vg, const Batch& x,
                       const OptimizerConfig& cfg, IterationRecord rec) {
  rec.gradient_batch = x.size();
  rec.batch_grad_norm = norm(vg.gradient);
  rec.step_norm = norm(p);
  if (!all_finite(p)) throw StepRejectionError("step direction is not finite", cfg.alpha, rec.step_norm);
  const bool zero_step = std::all_of(p.begin(), p.end(), [](double v) { return v == 0.0; });
  if (cfg.alpha_policy == AlphaPolicy::line_search && !zero_step) {
    const LineSearchResult ls =
        line_search(model, w, p, vg.gradient, vg.value, x, cfg.alpha, cfg.line_search_take_best);
    rec.alpha = ls.alpha;
    rec.ls_evals = ls.evals;
    rec.armijo_satisfied = ls.armijo_satisfied;
  } else {
    rec.alpha = cfg.alpha;
  }
  StepResult out;
  out.w_next = add_scaled(w, rec.alpha, p);
  try {
    model.monitor_loss(out.w_next, x);
  } catch (const NonFiniteLossError& e) {
    throw StepRejectionError(std::string("non-finite loss after the step: ") + e.what(), rec.alpha,
                             rec.step_norm);
  }
  out.record = std::move(rec);
  return out;
}

StepResult lrsfn_core(const DifferentiableModel& model, std::span<const double> w, const Batch& x,
                      const Batch& s, const OptimizerConfig& cfg, SeededRng& rng, bool flip,
                      const ValueAndGradient& vg, const LowRankFactor* precomputed) {
  const LowRankShape shape = low_rank_shape(model.dim(), cfg.rank, cfg.oversampling);
  LowRankFactor factor;
  if (precomputed != nullptr) {
    factor = *precomputed;
  } else {
    factor = randomized_eig(hessian_operator(model, w, s, false), shape.r, shape.p, rng);
  }
  const Vector p = smw_solve(flip ? flip_spectrum(factor) : factor, cfg.gamma, vg.gradient, false);
  IterationRecord rec;
  rec.method = flip ? Method::lrsfn : Method::lr_newton;
  rec.hessian_batch = s.size();
  rec.rank = shape.r;
  rec.oversampling = shape.p;
  rec.inner_iters = shape.r + shape.p;
  rec.termination = "lowrank";
  rec.min_rayleigh_or_eig = min_eig_estimate(factor);
  rec.discarded = factor.discarded;
  return finish_step(model, w, p, vg, x, cfg, std::move(rec));
}

Method krylov_method_tag(KrylovMethod solver) {
  switch (solver) {
    case KrylovMethod::cg: return Method::incg;
    case KrylovMethod::minres: return Method::inminres;
    case KrylovMethod::gmres: return Method::ingmres;
  }
  return Method::incg;
}

StepResult krylov_core(const DifferentiableModel& model, std::span<const double> w, const Batch& x,
                       const Batch& s, const OptimizerConfig& cfg, KrylovMethod solver,
                       const ValueAndGradient& vg) {
  const double gnorm = norm(vg.gradient);
  const double eta = forcing_eta(cfg.forcing, gnorm);
  Vector rhs = vg.gradient;
  scale(-1.0, rhs);
  const KrylovOutcome outcome =
      krylov_solve(solver, hessian_operator(model, w, s, true), rhs, eta, cfg.krylov_max_iter);
  Vector p = outcome.step;
  IterationRecord rec;
  rec.method = krylov_method_tag(solver);
  rec.hessian_batch = s.size();
  rec.inner_iters = outcome.iterations;
  rec.termination = to_string(outcome.termination);
  rec.min_rayleigh_or_eig = outcome.min_rayleigh;
  const bool empty = std::all_of(p.begin(), p.end(), [](double v) { return v == 0.0; });
  if (outcome.termination == Termination::breakdown && (empty || !all_finite(p)) && gnorm > 0.0) {
    // No usable iterate: regularization-preconditioned gradient.
    p = vg.gradient;
    scale(-1.0 / cfg.gamma, p);
    rec.termination = "breakdown_gradient_fallback";
  }
  return finish_step(model, w, p, vg, x, cfg, std::move(rec));
}

void stamp_sweeps(const DifferentiableModel& model, double before, StepResult& r) {
  r.record.iteration_sweeps = model.ledger().sweeps() - before;
}

}  // namespace

StepResult step_lrsfn(const DifferentiableModel& model, std::span<const double> w, const Batch& x,
                      const Batch& s, const OptimizerConfig& cfg, SeededRng& rng, bool flip) {
  const double before = model.ledger().sweeps();
  const ValueAndGradient vg = model.value_and_gradient(w, x);
  StepResult r = lrsfn_core(model, w, x, s, cfg, rng, flip, vg, nullptr);
  stamp_sweeps(model, before, r);
  return r;
}

StepResult step_inkrylov(const DifferentiableModel& model, std::span<const double> w,
                         const Batch& x, const Batch& s, const OptimizerConfig& cfg,
                         KrylovMethod solver) {
  const double before = model.ledger().sweeps();
  const ValueAndGradient vg = model.value_and_gradient(w, x);
  StepResult r = krylov_core(model, w, x, s, cfg, solver, vg);
  stamp_sweeps(model, before, r);
  return r;
}

Vector baseline_step(Method method, AdamState& state, std::span<const double> w,
                     std::span<const double> g, double alpha, const OptimizerConfig& cfg) {
  if (w.size() != g.size()) throw DimensionError("baseline_step: w and g differ in length");
  if (method == Method::gd || method == Method::sgd) return add_scaled(w, -alpha, g);
  if (method != Method::adam) throw ArgumentError("baseline_step: not a first-order method");
  const std::size_t d = w.size();
  if (state.m.size() != d) {
    state.m.assign(d, 0.0);
    state.v.assign(d, 0.0);
    state.t = 0;
  }
  ++state.t;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  Vector out(w.begin(), w.end());
  for (std::size_t i = 0; i < d; ++i) {
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g[i];
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g[i] * g[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    out[i] -= alpha * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
  }
  return out;
}

// ---------------------------------------------------------------------------

RunTrace run(const DifferentiableModel& model, const DifferentiableModel* test,
             const OptimizerConfig& cfg) {
  cfg.validate();
  const std::size_t n = model.sample_count();
  const std::size_t d = model.dim();
  const std::size_t n_x = cfg.n_x == 0 ? n : cfg.n_x;
  if (n_x > n) throw ArgumentError("run: n_x exceeds the training set size");
  const std::size_t n_s = cfg.n_s == 0 ? n_x : cfg.n_s;

  SeededRng root(cfg.seed);
  SeededRng init_rng = root.derive(1);
  SeededRng batch_rng = root.derive(2);
  SeededRng sketch_rng = root.derive(3);

  RunTrace trace;
  trace.config = cfg;
  Vector w = gaussian_vector(init_rng, d);
  scale(cfg.init_scale, w);

  const Batch train_all = model.full_batch();
  Batch test_batch;
  if (test != nullptr) {
    const std::size_t nt = cfg.n_test == 0 ? test->sample_count() : std::min(cfg.n_test, test->sample_count());
    test_batch = full_batch(nt);
  }
  // Semi-stochastic X_k: a fixed prefix of a seed-dependent shuffle.
  const Batch shuffled = sample_batch(batch_rng, n, n, false);
  Batch fixed_x;
  fixed_x.indices.assign(shuffled.indices.begin(), shuffled.indices.begin() + static_cast<std::ptrdiff_t>(n_x));
  const std::size_t stochastic_size =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.stochastic_fraction * static_cast<double>(n_x))));

  const auto clock_start = std::chrono::steady_clock::now();
  auto elapsed = [&]() {
    if (!cfg.record_timing) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
  };
  auto fill_monitors = [&](IterationRecord& rec, const Vector& at) {
    rec.train_loss = model.monitor_loss(at, train_all);
    rec.grad_norm = norm(model.monitor_gradient(at, train_all));
    rec.test_loss = test != nullptr ? test->monitor_loss(at, test_batch)
                                    : std::numeric_limits<double>::quiet_NaN();
  };

  IterationRecord first;
  first.k = 0;
  first.termination = "init";
  first.method = cfg.method;
  first.min_rayleigh_or_eig = std::numeric_limits<double>::quiet_NaN();
  try {
    fill_monitors(first, w);
  } catch (const NonFiniteLossError& e) {
    trace.status = RunStatus::failed;
    trace.message = std::string("initial point: ") + e.what();
    trace.final_w = w;
    return trace;
  }
  first.wall_time_s = elapsed();
  trace.records.push_back(first);
  if (cfg.checkpoint_every > 0) trace.checkpoints.emplace_back(0, w);

  const double ledger_start = model.ledger().sweeps();
  AdamState adam;
  std::size_t k = 0;
  trace.status = RunStatus::budget_exhausted;
  while (model.ledger().sweeps() - ledger_start < cfg.max_sweeps) {
    if (cfg.max_iterations != 0 && k >= cfg.max_iterations) {
      trace.status = RunStatus::iteration_limit;
      break;
    }
    ++k;
    const bool fully = cfg.batching == Batching::fully_stochastic || cfg.method == Method::sgd;
    const Batch x = fully ? sample_batch(batch_rng, n, std::min(stochastic_size, n), false) : fixed_x;
    const Batch s = n_s >= x.size() ? x : subsample(batch_rng, x, n_s);
    const bool warmup = k <= cfg.warmup_gd_steps;
    const Method method = warmup ? Method::gd : cfg.method;

    const double before = model.ledger().sweeps();
    StepResult step;
    try {
      const ValueAndGradient vg = model.value_and_gradient(w, x);
      const double gnorm = norm(vg.gradient);

      // Stationarity guard, certified within a rank-r subspace of ∇²F̄_S.
      std::optional<LowRankFactor> certificate;
      if (gnorm <= cfg.eps_g) {
        const LowRankShape shape = low_rank_shape(d, std::max<std::size_t>(cfg.rank, 1), cfg.oversampling);
        certificate = randomized_eig(hessian_operator(model, w, s, false), shape.r, shape.p, sketch_rng);
        const double lam = min_eig_estimate(*certificate);
        if (check_stationary(gnorm, lam, cfg)) {
          IterationRecord rec;
          rec.k = k;
          rec.method = method;
          rec.termination = "stationary";
          rec.gradient_batch = x.size();
          rec.hessian_batch = s.size();
          rec.batch_grad_norm = gnorm;
          rec.min_rayleigh_or_eig = lam;
          rec.rank = shape.r;
          rec.oversampling = shape.p;
          rec.certificate_applications = 2 * (shape.r + shape.p);
          rec.iteration_sweeps = model.ledger().sweeps() - before;
          rec.sweeps = model.ledger().sweeps() - ledger_start;
          fill_monitors(rec, w);
          rec.wall_time_s = elapsed();
          trace.records.push_back(std::move(rec));
          trace.status = RunStatus::stationary;
          trace.stationary = true;
          trace.message = "second-order stationarity certified within the rank-" +
                          std::to_string(shape.r) + " subspace";
          break;
        }
      }
      std::size_t cert_apps =
          certificate ? 2 * (certificate->rank() + certificate->discarded.size()) : 0;

      switch (method) {
        case Method::lrsfn:
        case Method::lr_newton: {
          const bool flip = method == Method::lrsfn;
          // The certificate factor was computed at the same (w, S_k); reuse it.
          const LowRankShape shape = low_rank_shape(d, cfg.rank, cfg.oversampling);
          const bool reuse = certificate && certificate->rank() == shape.r;
          if (reuse) cert_apps = 0;
          step = lrsfn_core(model, w, x, s, cfg, sketch_rng, flip, vg, reuse ? &*certificate : nullptr);
          break;
        }
        case Method::incg: step = krylov_core(model, w, x, s, cfg, KrylovMethod::cg, vg); break;
        case Method::inminres: step = krylov_core(model, w, x, s, cfg, KrylovMethod::minres, vg); break;
        case Method::ingmres: step = krylov_core(model, w, x, s, cfg, KrylovMethod::gmres, vg); break;
        case Method::gd:
        case Method::sgd:
        case Method::adam: {
          IterationRecord rec;
          rec.method = method;
          rec.termination = "first_order";
          rec.min_rayleigh_or_eig = std::numeric_limits<double>::quiet_NaN();
          if (method == Method::adam) {
            // Adam's step is taken as is; its direction is not a scaled gradient.
            rec.gradient_batch = x.size();
            rec.batch_grad_norm = gnorm;
            rec.alpha = cfg.alpha;
            step.w_next = baseline_step(method, adam, w, vg.gradient, cfg.alpha, cfg);
            rec.step_norm = norm(add_scaled(step.w_next, -1.0, w));
            try {
              model.monitor_loss(step.w_next, x);
            } catch (const NonFiniteLossError& e) {
              throw StepRejectionError(e.what(), cfg.alpha, rec.step_norm);
            }
            step.record = std::move(rec);
          } else {
            Vector p = vg.gradient;
            scale(-1.0, p);
            step = finish_step(model, w, p, vg, x, cfg, std::move(rec));
          }
          break;
        }
      }
      step.record.certificate_applications = cert_apps;
      if (cert_apps > 0 && step.record.hessian_batch == 0) step.record.hessian_batch = s.size();
    } catch (const Error& e) {
      trace.status = RunStatus::failed;
      trace.message = e.what();
      break;
    }

    IterationRecord& rec = step.record;
    rec.k = k;
    rec.iteration_sweeps = model.ledger().sweeps() - before;
    rec.sweeps = model.ledger().sweeps() - ledger_start;
    w = std::move(step.w_next);
    try {
      fill_monitors(rec, w);
    } catch (const NonFiniteLossError& e) {
      trace.status = RunStatus::failed;
      trace.message = e.what();
      trace.records.push_back(std::move(rec));
      break;
    }
    rec.wall_time_s = elapsed();
    trace.records.push_back(std::move(rec));
    if (cfg.checkpoint_every > 0 && k % cfg.checkpoint_every == 0) trace.checkpoints.emplace_back(k, w);
  }

  trace.final_w = w;
  trace.best_train = std::numeric_limits<double>::infinity();
  trace.best_test = std::numeric_limits<double>::infinity();
  for (const IterationRecord& r : trace.records) {
    if (std::isfinite(r.train_loss)) trace.best_train = std::min(trace.best_train, r.train_loss);
    if (std::isfinite(r.test_loss)) trace.best_test = std::min(trace.best_test, r.test_loss);
  }
  if (test == nullptr) trace.best_test = std::numeric_limits<double>::quiet_NaN();
  return trace;
}

// ---------------------------------------------------------------------------

std::vector<SweepBudgetRow> sweep_budget_report(const RunTrace& trace) {
  std::vector<SweepBudgetRow> rows;
  for (const IterationRecord& r : trace.records) {
    if (r.k == 0) continue;
    const double nx = static_cast<double>(r.gradient_batch);
    const double ns = static_cast<double>(r.hessian_batch);
    double predicted = nx + 0.5 * nx * static_cast<double>(r.ls_evals);
    predicted += 2.0 * static_cast<double>(r.certificate_applications) * ns;
    if (r.termination != "stationary") {
      switch (r.method) {
        case Method::lrsfn:
        case Method::lr_newton:
          predicted += 4.0 * static_cast<double>(r.rank + r.oversampling) * ns;
          break;
        case Method::incg:
        case Method::inminres:
        case Method::ingmres:
          predicted += 2.0 * static_cast<double>(r.inner_iters) * ns;
          break;
        default: break;
      }
    }
    rows.push_back({r.k, predicted, r.iteration_sweeps});
    if (predicted != r.iteration_sweeps) {
      std::ostringstream os;
      os << "iteration " << r.k << " (" << to_string(r.method) << "): predicted " << predicted
         << " sweeps, metered " << r.iteration_sweeps;
      throw AccountingError(os.str());
    }
  }
  return rows;
}

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trace_csv_header() {
  return "k,sweeps,train_loss,test_loss,grad_norm,alpha,inner_iters,termination,min_rayleigh_or_eig,wall_time_s";
}

void write_trace_csv(std::ostream& out, const RunTrace& trace) {
  out << trace_csv_header() << '\n';
  for (const IterationRecord& r : trace.records) {
    out << r.k << ',' << format_real(r.sweeps) << ',' << format_real(r.train_loss) << ','
        << format_real(r.test_loss) << ',' << format_real(r.grad_norm) << ','
        << format_real(r.alpha) << ',' << r.inner_iters << ',' << r.termination << ','
        << format_real(r.min_rayleigh_or_eig) << ',' << format_real(r.wall_time_s) << '\n';
  }
}

std::string status_json(const RunTrace& trace) {
  nlohmann::json j;
  j["status"] = to_string(trace.status);
  j["message"] = trace.message;
  j["stationary"] = trace.stationary;
  auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  j["best_train"] = num(trace.best_train);
  j["best_test"] = num(trace.best_test);
  j["iterations"] = trace.records.empty() ? 0 : trace.records.back().k;
  j["sweeps"] = trace.records.empty() ? 0.0 : trace.records.back().sweeps;
  if (!trace.records.empty()) {
    j["final_train_loss"] = num(trace.records.back().train_loss);
    j["final_grad_norm"] = num(trace.records.back().grad_norm);
  }
  std::size_t taken_anyway = 0;
  for (const IterationRecord& r : trace.records) taken_anyway += r.armijo_satisfied ? 0 : 1;
  j["armijo_failures"] = taken_anyway;
  j["config"] = config_to_json(trace.config);
  return j.dump(2) + "\n";
}

}  // namespace snk
