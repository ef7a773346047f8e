#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "snk/bounds.hpp"
#include "snk/optimizer.hpp"

namespace snk {

struct ProblemInstance {
  std::unique_ptr<DifferentiableModel> train;
  std::unique_ptr<DifferentiableModel> test;  // may be null
};

// Problem description, keyed by "type":
//   quadratic    spectrum (array, or {"d","max","min"} geometric), sigma_h,
//                grad_noise, n_samples, n_test, data_seed, w_star
//   saddle       kind ("indefinite-quadratic" | "cubic-monkey-saddle"), spectrum
//   autoencoder  widths, activation, and either dataset/test_dataset (CSV
//                paths) or mixture {samples, test_samples, dim, clusters,
//                latent_dim, cluster_spread, noise, offset, seed}
// Unknown keys are rejected.
ProblemInstance build_problem(const nlohmann::json& problem, double gamma);

// The quadratic part of build_problem, for callers that need the concrete type.
std::unique_ptr<QuadraticProblem> build_quadratic(const nlohmann::json& problem, double gamma);

struct NamedConfig {
  std::string name;
  OptimizerConfig config;
};

struct ExperimentSpec {
  nlohmann::json problem;
  std::vector<NamedConfig> configs;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "out";
};

// {"problem": {...}, "configs": [{"name": ..., <optimizer keys>}], "seeds": [...],
//  "output_dir": "..."}.  Configs without a name are called config<i>; names
// must be unique.
ExperimentSpec parse_experiment(const nlohmann::json& j);
ExperimentSpec load_experiment(const std::string& path);

// One run of one config for one seed.  Never throws for optimizer failures;
// those come back as RunStatus::failed.
RunTrace run_single(const ExperimentSpec& spec, const NamedConfig& config, std::uint64_t seed);

std::string run_file_stem(const std::string& config_name, std::uint64_t seed);
// Writes <dir>/<stem>.csv and <dir>/<stem>.json.
void write_run_files(const std::string& dir, const std::string& config_name, std::uint64_t seed,
                     const RunTrace& trace);

struct RunOutcome {
  std::string config;
  std::uint64_t seed = 0;
  bool failed = false;
  double best_train = 0.0;  // NaN when no finite value was recorded
  double best_test = 0.0;
};

struct SummaryRow {
  std::string config;
  std::size_t runs = 0;    // all runs, failed included
  std::size_t failed = 0;
  double mean_train = 0.0, std_train = 0.0, min_train = 0.0, median_train = 0.0;
  double mean_test = 0.0, std_test = 0.0, min_test = 0.0, median_test = 0.0;
};

// Statistics over completed runs only, rows sorted by config name.  Sample
// standard deviation (n − 1); fields are NaN when no completed run has a
// finite value.
std::vector<SummaryRow> summarize_outcomes(std::vector<RunOutcome> outcomes);
void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);

// Runs every config for every seed on `jobs` threads, writes the per-run
// files and summary.csv into spec.output_dir, and returns the summary.
std::vector<SummaryRow> run_ensemble(const ExperimentSpec& spec, std::size_t jobs = 1);

// Rebuilds the summary from the per-run files of a directory.  Matches the
// summary written by run_ensemble exactly.
std::vector<SummaryRow> summarize_directory(const std::string& dir);

struct SpectrumProbeOptions {
  std::size_t rank = 30;
  std::size_t oversampling = 5;
  std::size_t hessian_batch = 0;  // 0: every sample
  std::size_t every = 1;          // probe checkpoints whose iteration is a multiple of this
  std::uint64_t seed = 1;
};

struct SpectrumRow {
  std::size_t iteration = 0;
  std::size_t rank_index = 0;
  double eigenvalue = 0.0;
  std::string split;  // "train" or "test"
};

// Dominant eigenvalues of the data Hessian at each checkpoint of the trace,
// on the training and (if given) test sets.  Throws ArgumentError when the
// trace has no checkpoints.
std::vector<SpectrumRow> spectrum_probe(const DifferentiableModel& train,
                                        const DifferentiableModel* test, const RunTrace& trace,
                                        const SpectrumProbeOptions& options = {});
// Header iteration,rank_index,eigenvalue,split.
void write_spectrum_csv(std::ostream& out, const std::vector<SpectrumRow>& rows);

struct SensitivityRow {
  std::string config;
  std::size_t n_s = 0;
  std::uint64_t seed = 0;
  std::string status;
  double sweeps = 0.0;
  double best_train = 0.0;
  double best_test = 0.0;
};

// Every config × Hessian batch size × seed.
std::vector<SensitivityRow> batch_sensitivity(const ExperimentSpec& spec,
                                              const std::vector<std::size_t>& hessian_batches,
                                              std::size_t jobs = 1);
void write_sensitivity_csv(std::ostream& out, const std::vector<SensitivityRow>& rows);

struct BoundExperiment {
  nlohmann::json problem;  // quadratic
  OptimizerConfig config;
  std::vector<BoundKind> kinds;
  BoundOptions options;
};

// {"problem": {...}, "config": {...}, "kinds": [...], "trials", "distances",
//  "krylov_iterations", "spectrum_draws", "seed"}
BoundExperiment parse_bound_experiment(const nlohmann::json& j);
std::vector<BoundCheckReport> run_bound_experiment(const BoundExperiment& experiment);

// Command-line entry point.  Returns the process exit code.
int cli_main(int argc, char** argv);

}  // namespace snk
