#include "snk/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "snk/autoencoder.hpp"
#include "snk/config_io.hpp"

namespace snk {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& what) {
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) throw ArgumentError("unknown " + what + " key '" + item.key() + "'");
  }
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("bad value for '") + key + "': " + e.what());
  }
}

Vector parse_spectrum(const nlohmann::json& s) {
  if (s.is_array()) return s.get<Vector>();
  if (!s.is_object()) throw ArgumentError("spectrum must be an array or {d, max, min}");
  reject_unknown(s, {"d", "max", "min"}, "spectrum");
  const auto d = s.at("d").get<std::size_t>();
  const double hi = s.at("max").get<double>();
  const double lo = s.at("min").get<double>();
  if (d == 0 || !(hi > 0.0) || !(lo > 0.0)) throw ArgumentError("geometric spectrum needs d > 0 and positive ends");
  Vector out(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double t = d == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(d - 1);
    out[i] = hi * std::pow(lo / hi, t);
  }
  return out;
}

// Runs fn(i) for i in [0, count) on up to `jobs` threads.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t jobs, Fn fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

double best_of(const std::vector<double>& values) {
  double best = std::numeric_limits<double>::infinity();
  bool any = false;
  for (double v : values) {
    if (std::isfinite(v)) {
      best = std::min(best, v);
      any = true;
    }
  }
  return any ? best : kNaN;
}

RunOutcome outcome_of(const std::string& name, std::uint64_t seed, const RunTrace& trace) {
  std::vector<double> train, test;
  for (const IterationRecord& r : trace.records) {
    train.push_back(r.train_loss);
    test.push_back(r.test_loss);
  }
  RunOutcome o;
  o.config = name;
  o.seed = seed;
  o.failed = trace.status == RunStatus::failed;
  o.best_train = best_of(train);
  o.best_test = best_of(test);
  return o;
}

void describe(const std::vector<double>& sorted, double& mean, double& stddev, double& min, double& median) {
  if (sorted.empty()) {
    mean = stddev = min = median = kNaN;
    return;
  }
  const double n = static_cast<double>(sorted.size());
  double sum = 0.0;
  for (double v : sorted) sum += v;
  mean = sum / n;
  if (sorted.size() > 1) {
    double ss = 0.0;
    for (double v : sorted) ss += (v - mean) * (v - mean);
    stddev = std::sqrt(ss / (n - 1.0));
  } else {
    stddev = kNaN;
  }
  min = sorted.front();
  const std::size_t m = sorted.size() / 2;
  median = sorted.size() % 2 == 1 ? sorted[m] : 0.5 * (sorted[m - 1] + sorted[m]);
}

std::string resolve_out(const std::string& flag, const std::string& fallback) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("SNK_OUT"); env != nullptr && *env != '\0') return env;
  return fallback;
}

const NamedConfig& pick_config(const ExperimentSpec& spec, const std::string& name) {
  if (name.empty()) return spec.configs.front();
  for (const NamedConfig& c : spec.configs) {
    if (c.name == name) return c;
  }
  throw ArgumentError("no config named '" + name + "'");
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError("malformed JSON in " + path + ": " + e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Problems

std::unique_ptr<QuadraticProblem> build_quadratic(const nlohmann::json& p, double gamma) {
  reject_unknown(p, {"type", "spectrum", "sigma_h", "grad_noise", "n_samples", "n_test", "data_seed", "w_star"},
                 "quadratic problem");
  if (!p.contains("spectrum")) throw ArgumentError("quadratic problem needs a spectrum");
  QuadraticSpec q;
  q.spectrum = parse_spectrum(p.at("spectrum"));
  q.sigma_h = get_or(p, "sigma_h", 0.0);
  q.grad_noise = get_or(p, "grad_noise", 0.0);
  q.n_samples = get_or<std::size_t>(p, "n_samples", 1000);
  q.seed = get_or<std::uint64_t>(p, "data_seed", 1);
  q.w_star = get_or(p, "w_star", Vector{});
  q.gamma = gamma;
  return std::make_unique<QuadraticProblem>(q);
}

ProblemInstance build_problem(const nlohmann::json& p, double gamma) {
  if (!p.is_object() || !p.contains("type")) throw ArgumentError("problem must be an object with a type");
  const std::string type = p.at("type").get<std::string>();
  ProblemInstance inst;
  if (type == "quadratic") {
    auto q = build_quadratic(p, gamma);
    const auto n_test = get_or<std::size_t>(p, "n_test", 0);
    if (n_test > 0) inst.test = q->make_test_split(n_test);
    inst.train = std::move(q);
  } else if (type == "saddle") {
    reject_unknown(p, {"type", "kind", "spectrum"}, "saddle problem");
    inst.train = make_saddle_problem(get_or<std::string>(p, "kind", "indefinite-quadratic"),
                                     get_or(p, "spectrum", Vector{}), gamma);
  } else if (type == "autoencoder") {
    reject_unknown(p, {"type", "widths", "activation", "dataset", "test_dataset", "mixture"}, "autoencoder problem");
    const auto widths = get_or(p, "widths", std::vector<std::size_t>{});
    const auto activation = get_or<std::string>(p, "activation", "tanh");
    std::shared_ptr<Dataset> train, test;
    if (p.contains("mixture")) {
      if (p.contains("dataset")) throw ArgumentError("give either dataset or mixture, not both");
      const nlohmann::json& m = p.at("mixture");
      reject_unknown(m, {"samples", "test_samples", "dim", "clusters", "latent_dim", "cluster_spread", "noise", "offset", "seed"},
                     "mixture");
      MixtureOptions mo;
      const auto n_train = get_or<std::size_t>(m, "samples", mo.samples);
      const auto n_test = get_or<std::size_t>(m, "test_samples", 0);
      mo.samples = n_train + n_test;
      mo.dim = get_or(m, "dim", mo.dim);
      mo.clusters = get_or(m, "clusters", mo.clusters);
      mo.latent_dim = get_or(m, "latent_dim", mo.latent_dim);
      mo.cluster_spread = get_or(m, "cluster_spread", mo.cluster_spread);
      mo.noise = get_or(m, "noise", mo.noise);
      mo.offset = get_or(m, "offset", mo.offset);
      SeededRng rng(get_or<std::uint64_t>(m, "seed", 1));
      Dataset all = make_gaussian_mixture(rng, mo);
      train = std::make_shared<Dataset>();
      train->name = all.name;
      train->samples.assign(all.samples.begin(), all.samples.begin() + static_cast<std::ptrdiff_t>(n_train));
      if (n_test > 0) {
        test = std::make_shared<Dataset>();
        test->name = all.name + "-test";
        test->samples.assign(all.samples.begin() + static_cast<std::ptrdiff_t>(n_train), all.samples.end());
      }
    } else if (p.contains("dataset")) {
      train = std::make_shared<Dataset>(load_dataset_csv(p.at("dataset").get<std::string>()));
      if (p.contains("test_dataset")) {
        test = std::make_shared<Dataset>(load_dataset_csv(p.at("test_dataset").get<std::string>()));
      }
    } else {
      throw ArgumentError("autoencoder problem needs a dataset or a mixture");
    }
    inst.train = std::make_unique<FeedforwardAutoencoder>(widths, train, gamma, activation);
    if (test) inst.test = std::make_unique<FeedforwardAutoencoder>(widths, test, gamma, activation);
  } else {
    throw ArgumentError("unknown problem type '" + type + "'");
  }
  return inst;
}

// ---------------------------------------------------------------------------
// Experiments

ExperimentSpec parse_experiment(const nlohmann::json& j) {
  if (!j.is_object()) throw ArgumentError("experiment must be a JSON object");
  reject_unknown(j, {"problem", "configs", "seeds", "output_dir"}, "experiment");
  if (!j.contains("problem") || !j.contains("configs")) throw ArgumentError("experiment needs problem and configs");
  ExperimentSpec spec;
  spec.problem = j.at("problem");
  std::set<std::string> names;
  std::size_t i = 0;
  for (const auto& c : j.at("configs")) {
    NamedConfig nc;
    nc.name = c.contains("name") ? c.at("name").get<std::string>() : "config" + std::to_string(i);
    if (nc.name.empty() || nc.name.find_first_of("/\\") != std::string::npos) {
      throw ArgumentError("config name '" + nc.name + "' is not usable as a file name");
    }
    if (!names.insert(nc.name).second) throw ArgumentError("duplicate config name '" + nc.name + "'");
    nc.config = config_from_json(c);
    spec.configs.push_back(std::move(nc));
    ++i;
  }
  if (spec.configs.empty()) throw ArgumentError("experiment has no configs");
  spec.seeds = get_or(j, "seeds", std::vector<std::uint64_t>{1});
  if (spec.seeds.empty()) throw ArgumentError("experiment has no seeds");
  spec.output_dir = get_or<std::string>(j, "output_dir", spec.output_dir);
  return spec;
}

ExperimentSpec load_experiment(const std::string& path) { return parse_experiment(read_json_file(path)); }

RunTrace run_single(const ExperimentSpec& spec, const NamedConfig& config, std::uint64_t seed) {
  OptimizerConfig cfg = config.config;
  cfg.seed = seed;
  try {
    const ProblemInstance inst = build_problem(spec.problem, cfg.gamma);
    return run(*inst.train, inst.test.get(), cfg);
  } catch (const Error& e) {
    RunTrace t;
    t.config = cfg;
    t.status = RunStatus::failed;
    t.message = e.what();
    t.best_train = t.best_test = kNaN;
    return t;
  }
}

std::string run_file_stem(const std::string& config_name, std::uint64_t seed) {
  return config_name + "_seed" + std::to_string(seed);
}

void write_run_files(const std::string& dir, const std::string& config_name, std::uint64_t seed,
                     const RunTrace& trace) {
  fs::create_directories(dir);
  const fs::path stem = fs::path(dir) / run_file_stem(config_name, seed);
  std::ofstream csv(stem.string() + ".csv");
  std::ofstream js(stem.string() + ".json");
  if (!csv || !js) throw IoError("cannot write run files under " + dir);
  write_trace_csv(csv, trace);
  js << status_json(trace);
}

std::vector<SummaryRow> summarize_outcomes(std::vector<RunOutcome> outcomes) {
  std::map<std::string, std::vector<RunOutcome>> by_name;
  for (RunOutcome& o : outcomes) by_name[o.config].push_back(std::move(o));
  std::vector<SummaryRow> rows;
  for (const auto& [name, runs] : by_name) {
    SummaryRow row;
    row.config = name;
    row.runs = runs.size();
    std::vector<double> train, test;
    for (const RunOutcome& o : runs) {
      if (o.failed) {
        ++row.failed;
        continue;
      }
      if (std::isfinite(o.best_train)) train.push_back(o.best_train);
      if (std::isfinite(o.best_test)) test.push_back(o.best_test);
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    describe(train, row.mean_train, row.std_train, row.min_train, row.median_train);
    describe(test, row.mean_test, row.std_test, row.min_test, row.median_test);
    rows.push_back(row);
  }
  return rows;
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "config,runs,failed,mean_train,std_train,min_train,median_train,mean_test,std_test,min_test,median_test\n";
  for (const SummaryRow& r : rows) {
    out << r.config << ',' << r.runs << ',' << r.failed << ',' << format_real(r.mean_train) << ','
        << format_real(r.std_train) << ',' << format_real(r.min_train) << ',' << format_real(r.median_train)
        << ',' << format_real(r.mean_test) << ',' << format_real(r.std_test) << ','
        << format_real(r.min_test) << ',' << format_real(r.median_test) << '\n';
  }
}

std::vector<SummaryRow> run_ensemble(const ExperimentSpec& spec, std::size_t jobs) {
  struct Job {
    const NamedConfig* config;
    std::uint64_t seed;
  };
  std::vector<Job> work;
  for (const NamedConfig& c : spec.configs) {
    for (std::uint64_t s : spec.seeds) work.push_back({&c, s});
  }
  std::vector<RunOutcome> outcomes(work.size());
  fs::create_directories(spec.output_dir);
  parallel_for(work.size(), jobs, [&](std::size_t i) {
    const RunTrace trace = run_single(spec, *work[i].config, work[i].seed);
    write_run_files(spec.output_dir, work[i].config->name, work[i].seed, trace);
    outcomes[i] = outcome_of(work[i].config->name, work[i].seed, trace);
  });
  std::vector<SummaryRow> rows = summarize_outcomes(outcomes);
  std::ofstream out(fs::path(spec.output_dir) / "summary.csv");
  if (!out) throw IoError("cannot write summary.csv under " + spec.output_dir);
  write_summary_csv(out, rows);
  return rows;
}

std::vector<SummaryRow> summarize_directory(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const fs::path& p = entry.path();
    if (p.extension() == ".csv" && p.stem().string().rfind("_seed") != std::string::npos) files.push_back(p);
  }
  std::sort(files.begin(), files.end());
  std::vector<RunOutcome> outcomes;
  for (const fs::path& p : files) {
    const std::string stem = p.stem().string();
    const std::size_t at = stem.rfind("_seed");
    const std::string seed_text = stem.substr(at + 5);
    if (seed_text.empty() || seed_text.find_first_not_of("0123456789") != std::string::npos) continue;
    std::ifstream in(p);
    std::string line;
    if (!std::getline(in, line) || line != trace_csv_header()) continue;
    std::vector<double> train, test;
    while (std::getline(in, line)) {
      std::vector<std::string> cells;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      if (cells.size() < 4) throw IoError("truncated trace row in " + p.string());
      train.push_back(std::strtod(cells[2].c_str(), nullptr));
      test.push_back(std::strtod(cells[3].c_str(), nullptr));
    }
    RunOutcome o;
    o.config = stem.substr(0, at);
    o.seed = std::stoull(seed_text);
    o.best_train = best_of(train);
    o.best_test = best_of(test);
    fs::path status = p;
    status.replace_extension(".json");
    if (fs::exists(status)) {
      const nlohmann::json js = read_json_file(status.string());
      o.failed = js.value("status", std::string()) == "failed";
    }
    outcomes.push_back(o);
  }
  return summarize_outcomes(outcomes);
}

// ---------------------------------------------------------------------------
// Spectrum probe and batch sensitivity

std::vector<SpectrumRow> spectrum_probe(const DifferentiableModel& train, const DifferentiableModel* test,
                                        const RunTrace& trace, const SpectrumProbeOptions& options) {
  if (trace.checkpoints.empty()) {
    throw ArgumentError("spectrum probe needs checkpoints; set checkpoint_every");
  }
  if (options.every == 0) throw ArgumentError("spectrum probe: every must be positive");
  std::vector<SpectrumRow> rows;
  auto probe = [&](const DifferentiableModel& model, const std::string& split, std::size_t k,
                   const Vector& w, std::uint64_t stream) {
    const std::size_t d = model.dim();
    const std::size_t r = std::min(options.rank, d);
    const std::size_t p = std::min(options.oversampling, d - r);
    SeededRng rng = SeededRng(options.seed).derive(stream);
    const Batch batch = options.hessian_batch == 0 || options.hessian_batch >= model.sample_count()
                            ? model.full_batch()
                            : sample_batch(rng, model.sample_count(), options.hessian_batch, false);
    const LowRankFactor f = randomized_eig(hessian_operator(model, w, batch, false), r, p, rng);
    for (std::size_t i = 0; i < f.rank(); ++i) rows.push_back({k, i, f.lambdas[i], split});
  };
  for (const auto& [k, w] : trace.checkpoints) {
    if (k % options.every != 0) continue;
    probe(train, "train", k, w, 2 * k);
    if (test != nullptr) probe(*test, "test", k, w, 2 * k + 1);
  }
  return rows;
}

void write_spectrum_csv(std::ostream& out, const std::vector<SpectrumRow>& rows) {
  out << "iteration,rank_index,eigenvalue,split\n";
  for (const SpectrumRow& r : rows) {
    out << r.iteration << ',' << r.rank_index << ',' << format_real(r.eigenvalue) << ',' << r.split << '\n';
  }
}

std::vector<SensitivityRow> batch_sensitivity(const ExperimentSpec& spec,
                                              const std::vector<std::size_t>& hessian_batches,
                                              std::size_t jobs) {
  if (hessian_batches.empty()) throw ArgumentError("batch sensitivity needs at least one Hessian batch size");
  std::vector<SensitivityRow> rows;
  std::vector<NamedConfig> variants;
  for (const NamedConfig& c : spec.configs) {
    for (std::size_t ns : hessian_batches) {
      NamedConfig v = c;
      v.config.n_s = ns;
      v.config.validate();
      variants.push_back(std::move(v));
      for (std::uint64_t seed : spec.seeds) rows.push_back({c.name, ns, seed, "", 0.0, 0.0, 0.0});
    }
  }
  const std::size_t per = spec.seeds.size();
  parallel_for(rows.size(), jobs, [&](std::size_t i) {
    const RunTrace trace = run_single(spec, variants[i / per], rows[i].seed);
    const RunOutcome o = outcome_of(rows[i].config, rows[i].seed, trace);
    rows[i].status = to_string(trace.status);
    rows[i].sweeps = trace.records.empty() ? 0.0 : trace.records.back().sweeps;
    rows[i].best_train = o.best_train;
    rows[i].best_test = o.best_test;
  });
  return rows;
}

void write_sensitivity_csv(std::ostream& out, const std::vector<SensitivityRow>& rows) {
  out << "config,n_s,seed,status,sweeps,best_train,best_test\n";
  for (const SensitivityRow& r : rows) {
    out << r.config << ',' << r.n_s << ',' << r.seed << ',' << r.status << ',' << format_real(r.sweeps) << ','
        << format_real(r.best_train) << ',' << format_real(r.best_test) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Bound experiments

BoundExperiment parse_bound_experiment(const nlohmann::json& j) {
  if (!j.is_object()) throw ArgumentError("bound experiment must be a JSON object");
  reject_unknown(j, {"problem", "config", "kinds", "trials", "distances", "krylov_iterations", "spectrum_draws",
                     "seed"},
                 "bound experiment");
  if (!j.contains("problem")) throw ArgumentError("bound experiment needs a problem");
  BoundExperiment e;
  e.problem = j.at("problem");
  if (e.problem.value("type", std::string()) != "quadratic") {
    throw ArgumentError("bound experiments need a quadratic problem");
  }
  nlohmann::json cfg = j.value("config", nlohmann::json::object());
  if (!cfg.contains("alpha_policy")) cfg["alpha_policy"] = "fixed";
  e.config = config_from_json(cfg);
  if (j.contains("kinds")) {
    for (const auto& k : j.at("kinds")) e.kinds.push_back(bound_kind_from_string(k.get<std::string>()));
  } else {
    e.kinds = all_bound_kinds();
  }
  e.options.trials = get_or(j, "trials", e.options.trials);
  e.options.distances = get_or(j, "distances", e.options.distances);
  e.options.krylov_iterations = get_or(j, "krylov_iterations", e.options.krylov_iterations);
  e.options.spectrum_draws = get_or(j, "spectrum_draws", e.options.spectrum_draws);
  e.options.seed = get_or(j, "seed", e.options.seed);
  return e;
}

std::vector<BoundCheckReport> run_bound_experiment(const BoundExperiment& experiment) {
  const auto problem = build_quadratic(experiment.problem, experiment.config.gamma);
  const BoundIngredients ing = estimate_bound_ingredients(*problem, experiment.config, experiment.options);
  std::vector<BoundCheckReport> out;
  for (BoundKind k : experiment.kinds) {
    out.push_back(verify_bound(k, *problem, experiment.config, experiment.options, ing));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Command line

int cli_main(int argc, char** argv) {
  CLI::App app{"Stochastic Newton-Krylov and low-rank saddle-free Newton experiments", "snk"};
  app.require_subcommand(1);

  std::string config, out_flag, dir, name;
  std::uint64_t seed = 1;
  std::size_t jobs = 1, rank = 30, every = 1, hessian_batch = 0, trials = 0;
  std::vector<std::size_t> ns;

  auto* run_cmd = app.add_subcommand("run", "Run one config for one seed");
  run_cmd->add_option("--config", config, "Experiment JSON")->required();
  run_cmd->add_option("--seed", seed, "Run seed");
  run_cmd->add_option("--name", name, "Config name (default: the first)");
  run_cmd->add_option("--out", out_flag, "Output directory (default: $SNK_OUT or the experiment's output_dir)");

  auto* ens_cmd = app.add_subcommand("ensemble", "Run every config for every seed");
  ens_cmd->add_option("--config", config, "Experiment JSON")->required();
  ens_cmd->add_option("--jobs", jobs, "Worker threads");
  ens_cmd->add_option("--out", out_flag, "Output directory");

  auto* spec_cmd = app.add_subcommand("spectrum", "Hessian spectrum along a run's iterates");
  spec_cmd->add_option("--config", config, "Experiment JSON")->required();
  spec_cmd->add_option("--seed", seed, "Run seed");
  spec_cmd->add_option("--name", name, "Config name (default: the first)");
  spec_cmd->add_option("--rank", rank, "Eigenvalues per iterate");
  spec_cmd->add_option("--every", every, "Probe every k-th iterate");
  spec_cmd->add_option("--hessian-batch", hessian_batch, "Samples per probe Hessian (0: all)");
  spec_cmd->add_option("--out", out_flag, "Output directory");

  auto* sens_cmd = app.add_subcommand("sensitivity", "Sweep the Hessian batch size");
  sens_cmd->add_option("--config", config, "Experiment JSON")->required();
  sens_cmd->add_option("--ns", ns, "Hessian batch sizes")->required();
  sens_cmd->add_option("--jobs", jobs, "Worker threads");
  sens_cmd->add_option("--out", out_flag, "Output directory");

  auto* bound_cmd = app.add_subcommand("verify-bound", "Check the one-step local convergence bounds");
  bound_cmd->add_option("--config", config, "Bound experiment JSON")->required();
  bound_cmd->add_option("--trials", trials, "Override the number of trials");
  bound_cmd->add_option("--out", out_flag, "Output directory");

  auto* sum_cmd = app.add_subcommand("summarize", "Rebuild summary.csv from run files");
  sum_cmd->add_option("--dir", dir, "Directory with run files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (run_cmd->parsed()) {
      const ExperimentSpec spec = load_experiment(config);
      const NamedConfig& nc = pick_config(spec, name);
      const std::string out = resolve_out(out_flag, spec.output_dir);
      const RunTrace trace = run_single(spec, nc, seed);
      write_run_files(out, nc.name, seed, trace);
      std::cout << nc.name << " seed " << seed << ": " << to_string(trace.status) << ", best train "
                << format_real(trace.best_train) << "\n";
      return trace.status == RunStatus::failed ? 1 : 0;
    }
    if (ens_cmd->parsed()) {
      ExperimentSpec spec = load_experiment(config);
      spec.output_dir = resolve_out(out_flag, spec.output_dir);
      const auto rows = run_ensemble(spec, jobs);
      write_summary_csv(std::cout, rows);
      return 0;
    }
    if (spec_cmd->parsed()) {
      const ExperimentSpec spec = load_experiment(config);
      NamedConfig nc = pick_config(spec, name);
      nc.config.seed = seed;
      nc.config.checkpoint_every = std::max<std::size_t>(every, 1);
      const ProblemInstance inst = build_problem(spec.problem, nc.config.gamma);
      const RunTrace trace = run(*inst.train, inst.test.get(), nc.config);
      SpectrumProbeOptions po;
      po.rank = rank;
      po.hessian_batch = hessian_batch;
      po.every = nc.config.checkpoint_every;
      po.seed = seed;
      const auto rows = spectrum_probe(*inst.train, inst.test.get(), trace, po);
      const std::string out = resolve_out(out_flag, spec.output_dir);
      write_run_files(out, nc.name, seed, trace);
      fs::create_directories(out);
      const fs::path path = fs::path(out) / ("spectrum_" + run_file_stem(nc.name, seed) + ".csv");
      std::ofstream f(path);
      if (!f) throw IoError("cannot write " + path.string());
      write_spectrum_csv(f, rows);
      std::cout << "wrote " << path.string() << "\n";
      return 0;
    }
    if (sens_cmd->parsed()) {
      const ExperimentSpec spec = load_experiment(config);
      const auto rows = batch_sensitivity(spec, ns, jobs);
      const std::string out = resolve_out(out_flag, spec.output_dir);
      fs::create_directories(out);
      std::ofstream f(fs::path(out) / "sensitivity.csv");
      if (!f) throw IoError("cannot write sensitivity.csv under " + out);
      write_sensitivity_csv(f, rows);
      write_sensitivity_csv(std::cout, rows);
      return 0;
    }
    if (bound_cmd->parsed()) {
      BoundExperiment e = parse_bound_experiment(read_json_file(config));
      if (trials > 0) e.options.trials = trials;
      const auto reports = run_bound_experiment(e);
      const std::string out = resolve_out(out_flag, "out");
      fs::create_directories(out);
      std::ofstream f(fs::path(out) / "bounds.json");
      if (!f) throw IoError("cannot write bounds.json under " + out);
      f << "[\n";
      bool clean = true;
      for (std::size_t i = 0; i < reports.size(); ++i) {
        const BoundCheckReport& r = reports[i];
        f << bound_report_json(r) << (i + 1 < reports.size() ? ",\n" : "\n");
        clean = clean && r.violations == 0 && r.hypotheses_hold;
        std::cout << to_string(r.kind) << ": " << r.violations << " violation(s)"
                  << (r.hypotheses_hold ? "" : ", hypotheses fail") << "\n";
        for (const BoundRow& row : r.rows) {
          std::cout << "  delta " << format_real(row.delta) << "  mean " << format_real(row.mean) << "  se "
                    << format_real(row.std_error) << "  bound " << format_real(row.bound) << "\n";
        }
      }
      f << "]\n";
      return clean ? 0 : 1;
    }
    if (sum_cmd->parsed()) {
      const auto rows = summarize_directory(dir);
      std::ofstream f(fs::path(dir) / "summary.csv");
      if (!f) throw IoError("cannot write summary.csv under " + dir);
      write_summary_csv(f, rows);
      write_summary_csv(std::cout, rows);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace snk
