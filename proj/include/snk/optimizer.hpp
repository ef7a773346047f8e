#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "snk/krylov.hpp"
#include "snk/lowrank.hpp"
#include "snk/model.hpp"

namespace snk {

enum class Method { lrsfn, lr_newton, incg, inminres, ingmres, gd, sgd, adam };
enum class AlphaPolicy { fixed, line_search };
enum class Batching { semi_stochastic, fully_stochastic };

std::string to_string(Method m);
Method method_from_string(const std::string& s);
bool is_newton(Method m);

struct OptimizerConfig {
  Method method = Method::incg;
  double gamma = 0.1;
  std::size_t rank = 20;
  std::size_t oversampling = 5;
  ForcingSchedule forcing;
  std::size_t krylov_max_iter = 0;  // 0: min(d, 100)
  AlphaPolicy alpha_policy = AlphaPolicy::line_search;
  double alpha = 1.0;               // fixed step, or the first line-search trial
  bool line_search_take_best = false;  // on failure take the best trial, not the last
  double eps_g = 1e-6;
  double eps_h = 1e-3;
  std::size_t n_x = 0;              // 0: the whole training set
  std::size_t n_s = 0;              // 0: n_x
  Batching batching = Batching::semi_stochastic;
  double stochastic_fraction = 0.1;
  double max_sweeps = 1e4;
  std::size_t max_iterations = 0;   // 0: unbounded
  std::uint64_t seed = 1;
  std::size_t warmup_gd_steps = 0;
  double init_scale = 1.0;
  std::size_t n_test = 0;           // 0: the whole test set
  std::size_t checkpoint_every = 0; // keep every k-th iterate in the trace; 0: none
  bool record_timing = false;       // wall_time_s stays 0 otherwise, keeping traces byte-stable
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  // Throws ArgumentError on inconsistent settings.
  void validate() const;
};

struct IterationRecord {
  std::size_t k = 0;
  double sweeps = 0.0;            // cumulative metered sweeps
  double iteration_sweeps = 0.0;  // metered sweeps of this iteration
  double train_loss = 0.0;        // at the new iterate, full training set (unmetered)
  double test_loss = 0.0;         // at the new iterate, test batch (unmetered)
  double grad_norm = 0.0;         // full training-set gradient norm at the new iterate (unmetered)
  double batch_grad_norm = 0.0;   // ‖∇F̄_{X_k}‖ at the previous iterate, used by the step
  double alpha = 0.0;
  double step_norm = 0.0;
  std::size_t inner_iters = 0;    // Krylov iterations, or r + p for the low-rank methods
  std::string termination;        // Krylov termination, "lowrank", "first_order", "init", "stationary"
  double min_rayleigh_or_eig = 0.0;
  double wall_time_s = 0.0;
  Method method = Method::gd;     // what this iteration actually did (warm-up steps are gd)
  std::size_t gradient_batch = 0;
  std::size_t hessian_batch = 0;
  std::size_t rank = 0;
  std::size_t oversampling = 0;
  std::size_t ls_evals = 0;
  bool armijo_satisfied = true;   // false when a line-search step was "taken anyway"
  std::size_t certificate_applications = 0;  // Hessian applications spent on the stationarity check
  Vector discarded;               // low-rank only
};

enum class RunStatus { budget_exhausted, iteration_limit, stationary, failed };
std::string to_string(RunStatus s);

struct RunTrace {
  OptimizerConfig config;
  std::vector<IterationRecord> records;
  Vector final_w;
  double best_train = 0.0;
  double best_test = 0.0;
  RunStatus status = RunStatus::budget_exhausted;
  std::string message;
  bool stationary = false;
  std::vector<std::pair<std::size_t, Vector>> checkpoints;
};

struct LineSearchResult {
  double alpha = 1.0;
  std::size_t evals = 0;
  bool armijo_satisfied = true;
};

// Backtracking from alpha0 by halves, Armijo constant 1e-4, at most ten
// halvings (eleven trials).  If no trial satisfies Armijo the last trial (or, with take_best,
// the lowest finite trial) is returned.  Each trial is a metered loss-only
// evaluation on `batch`.
LineSearchResult line_search(const DifferentiableModel& model, std::span<const double> w,
                             std::span<const double> p, std::span<const double> g, double f0,
                             const Batch& batch, double alpha0 = 1.0, bool take_best = false);

bool check_stationary(double grad_norm, double min_eig_estimate, const OptimizerConfig& cfg);

struct StepResult {
  Vector w_next;
  IterationRecord record;
};

// One iteration of the low-rank (saddle-free) Newton method.  The factor is
// computed from the unregularized subsampled Hessian; γ enters through the
// Sherman-Morrison-Woodbury solve.  flip = false gives low-rank Newton.
StepResult step_lrsfn(const DifferentiableModel& model, std::span<const double> w, const Batch& x,
                      const Batch& s, const OptimizerConfig& cfg, SeededRng& rng, bool flip = true);

// One iteration of inexact Newton-Krylov on ∇²F̄_S + γI with rhs −∇F̄_X.
StepResult step_inkrylov(const DifferentiableModel& model, std::span<const double> w,
                         const Batch& x, const Batch& s, const OptimizerConfig& cfg,
                         KrylovMethod solver);

struct AdamState {
  Vector m;
  Vector v;
  std::size_t t = 0;
};

// gd and sgd: w − αg.  adam: bias-corrected moment update.
Vector baseline_step(Method method, AdamState& state, std::span<const double> w,
                     std::span<const double> g, double alpha, const OptimizerConfig& cfg);

// Drives a full run.  `test` may be null.
RunTrace run(const DifferentiableModel& model, const DifferentiableModel* test,
             const OptimizerConfig& cfg);

struct SweepBudgetRow {
  std::size_t k = 0;
  double predicted = 0.0;
  double metered = 0.0;
};

// Per-iteration sweeps predicted by the cost formulas
//   gradient N_X, low-rank Hessian 4(r+p)N_S, Krylov 2·iters·N_S,
//   line-search N_X/2 per trial, certificate 2·applications·N_S
// against the metered sweeps.  Throws AccountingError on any mismatch.
std::vector<SweepBudgetRow> sweep_budget_report(const RunTrace& trace);

// Trace CSV with the fixed header
// k,sweeps,train_loss,test_loss,grad_norm,alpha,inner_iters,termination,min_rayleigh_or_eig,wall_time_s
void write_trace_csv(std::ostream& out, const RunTrace& trace);
std::string trace_csv_header();
std::string format_real(double v);

// Status JSON: verdict, best losses and the config snapshot.
std::string status_json(const RunTrace& trace);

}  // namespace snk
