#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "helpers.hpp"
#include "snk/bounds.hpp"
#include "snk/harness.hpp"

using namespace snk;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

json quadratic_problem(double sigma_h = 0.05) {
  return {{"type", "quadratic"},
          {"spectrum", {{"d", 8}, {"max", 2.0}, {"min", 0.05}}},
          {"sigma_h", sigma_h},
          {"grad_noise", 0.1},
          {"n_samples", 200},
          {"n_test", 100},
          {"data_seed", 5}};
}

json experiment(const std::string& out) {
  return {{"problem", quadratic_problem()},
          {"configs",
           {{{"name", "incg"}, {"method", "incg"}, {"n_s", 40}, {"max_sweeps", 3000}},
            {{"name", "gd"}, {"method", "gd"}, {"max_sweeps", 3000}}}},
          {"seeds", {1, 2, 3}},
          {"output_dir", out}};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Independent reader: every field that parses as a number is re-emitted
// through the 17-digit formatter, everything else verbatim.
std::string reemit_csv(const std::string& text) {
  std::istringstream in(text);
  std::string out, line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      out += line + '\n';
      header = false;
      continue;
    }
    std::istringstream fields(line);
    std::string f;
    bool first = true;
    while (std::getline(fields, f, ',')) {
      if (!first) out += ',';
      first = false;
      char* end = nullptr;
      const double v = std::strtod(f.c_str(), &end);
      out += (!f.empty() && *end == '\0') ? format_real(v) : f;
    }
    out += '\n';
  }
  return out;
}

int call_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "snk");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("experiment parsing") {
  const ExperimentSpec spec = parse_experiment(experiment("x"));
  CHECK(spec.configs.size() == 2);
  CHECK(spec.configs[0].name == "incg");
  CHECK(spec.configs[0].config.n_s == 40);
  CHECK(spec.seeds == std::vector<std::uint64_t>{1, 2, 3});

  json unnamed = experiment("x");
  unnamed["configs"][1].erase("name");
  CHECK(parse_experiment(unnamed).configs[1].name == "config1");

  json dup = experiment("x");
  dup["configs"][1]["name"] = "incg";
  CHECK_THROWS_AS(parse_experiment(dup), ArgumentError);
  json none = experiment("x");
  none["seeds"] = json::array();
  CHECK_THROWS_AS(parse_experiment(none), ArgumentError);
}

TEST_CASE("problem builders") {
  const ProblemInstance q = build_problem(quadratic_problem(), 0.1);
  CHECK(q.train->dim() == 8);
  CHECK(q.train->sample_count() == 200);
  REQUIRE(q.test != nullptr);
  CHECK(q.test->sample_count() == 100);

  const ProblemInstance s = build_problem({{"type", "saddle"}, {"spectrum", {1, -1}}}, 0.1);
  CHECK(s.train->name() == "indefinite-quadratic");

  const json ae = {{"type", "autoencoder"},
                   {"widths", {6, 3, 6}},
                   {"mixture", {{"samples", 30}, {"test_samples", 10}, {"dim", 6}, {"clusters", 2}, {"latent_dim", 2}}}};
  const ProblemInstance a = build_problem(ae, 0.1);
  CHECK(a.train->sample_count() == 30);
  CHECK(a.test->sample_count() == 10);
  CHECK(a.train->dim() == 6 * 3 + 3 + 3 * 6 + 6);
  CHECK_THROWS_AS(build_problem({{"type", "cnn"}}, 0.1), ArgumentError);
  json extra = quadratic_problem();
  extra["colour"] = "red";
  CHECK_THROWS_AS(build_problem(extra, 0.1), ArgumentError);
}

TEST_CASE("ensemble writes one trace per run and one summary row per config") {
  TempDir dir("snk_ensemble_test");
  const ExperimentSpec spec = parse_experiment(experiment(dir.path.string()));
  const auto rows = run_ensemble(spec, 2);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].config == "gd");
  CHECK(rows[1].config == "incg");
  for (const SummaryRow& r : rows) {
    CHECK(r.runs == 3);
    CHECK(r.failed == 0);
    CHECK(r.min_train <= r.median_train);
  }
  std::size_t traces = 0;
  for (const auto& e : fs::directory_iterator(dir.path)) {
    if (e.path().extension() == ".csv" && e.path().filename() != "summary.csv") ++traces;
  }
  CHECK(traces == 6);
  CHECK(fs::exists(dir.path / "incg_seed2.json"));

  SUBCASE("summary recomputed from the files matches") {
    const auto again = summarize_directory(dir.path.string());
    std::ostringstream a, b;
    write_summary_csv(a, rows);
    write_summary_csv(b, again);
    CHECK(a.str() == b.str());
    CHECK(slurp(dir.path / "summary.csv") == a.str());
  }
  SUBCASE("statistics agree with a direct computation over the traces") {
    std::vector<double> best;
    for (int seed = 1; seed <= 3; ++seed) {
      std::istringstream in(slurp(dir.path / ("incg_seed" + std::to_string(seed) + ".csv")));
      std::string line;
      std::getline(in, line);
      double b = INFINITY;
      while (std::getline(in, line)) {
        std::istringstream f(line);
        std::string k, sweeps, train;
        std::getline(f, k, ',');
        std::getline(f, sweeps, ',');
        std::getline(f, train, ',');
        b = std::min(b, std::strtod(train.c_str(), nullptr));
      }
      best.push_back(b);
    }
    std::sort(best.begin(), best.end());
    const double mean = (best[0] + best[1] + best[2]) / 3.0;
    double ss = 0.0;
    for (double v : best) ss += (v - mean) * (v - mean);
    CHECK(rows[1].mean_train == mean);
    CHECK(rows[1].std_train == std::sqrt(ss / 2.0));
    CHECK(rows[1].min_train == best[0]);
    CHECK(rows[1].median_train == best[1]);
  }
  SUBCASE("every CSV round-trips through an independent reader") {
    for (const auto& e : fs::directory_iterator(dir.path)) {
      if (e.path().extension() != ".csv") continue;
      const std::string text = slurp(e.path());
      CHECK(reemit_csv(text) == text);
    }
  }
}

TEST_CASE("identical configs give identical summary rows") {
  TempDir dir("snk_dup_test");
  json j = experiment(dir.path.string());
  j["configs"][1] = j["configs"][0];
  j["configs"][1]["name"] = "incg_again";
  const auto rows = run_ensemble(parse_experiment(j), 1);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].mean_train == rows[1].mean_train);
  CHECK(rows[0].std_train == rows[1].std_train);
  CHECK(rows[0].median_test == rows[1].median_test);
}

TEST_CASE("summaries do not depend on seed order") {
  std::vector<RunOutcome> o{{"a", 1, false, 3.0, 1.0}, {"a", 2, false, 1.0, 2.0}, {"a", 3, true, 0.0, 0.0},
                            {"a", 4, false, 2.0, 4.0}};
  const auto r1 = summarize_outcomes(o);
  std::reverse(o.begin(), o.end());
  const auto r2 = summarize_outcomes(o);
  REQUIRE(r1.size() == 1);
  CHECK(r1[0].runs == 4);
  CHECK(r1[0].failed == 1);
  CHECK(r1[0].mean_train == 2.0);
  CHECK(r1[0].std_train == 1.0);
  CHECK(r1[0].median_train == 2.0);
  CHECK(r1[0].median_test == 2.0);
  CHECK(r2[0].mean_train == r1[0].mean_train);
  CHECK(r2[0].std_test == r1[0].std_test);

  const auto single = summarize_outcomes({{"b", 1, false, 5.0, 6.0}});
  CHECK(single[0].mean_train == 5.0);
  CHECK(std::isnan(single[0].std_train));
}

TEST_CASE("spectrum probe on a quadratic") {
  const ProblemInstance inst = build_problem(quadratic_problem(0.0), 0.1);
  OptimizerConfig cfg;
  cfg.max_iterations = 4;
  cfg.checkpoint_every = 2;
  const RunTrace t = run(*inst.train, inst.test.get(), cfg);
  SpectrumProbeOptions po;
  po.rank = 5;
  po.oversampling = 3;
  const auto rows = spectrum_probe(*inst.train, inst.test.get(), t, po);
  CHECK(rows.size() == 3 * 2 * 5);
  // The Hessian is constant and both splits average to the same matrix.
  auto* q = dynamic_cast<const QuadraticProblem*>(inst.train.get());
  const SymEig exact = sym_eig(q->mean_hessian());
  for (const SpectrumRow& r : rows) {
    CHECK(std::abs(r.eigenvalue - exact.values[r.rank_index]) <= 1e-2 * std::abs(exact.values[0]));
    if (r.rank_index > 0) CHECK(std::abs(r.eigenvalue) <= std::abs(rows[&r - &rows[0] - 1].eigenvalue) + 1e-12);
  }
  std::ostringstream a, b;
  write_spectrum_csv(a, rows);
  write_spectrum_csv(b, spectrum_probe(*inst.train, inst.test.get(), t, po));
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("iteration,rank_index,eigenvalue,split\n", 0) == 0);

  RunTrace bare = t;
  bare.checkpoints.clear();
  CHECK_THROWS_AS(spectrum_probe(*inst.train, nullptr, bare, po), ArgumentError);
}

TEST_CASE("autoencoder spectrum dump is sorted per iteration") {
  const json ae = {{"type", "autoencoder"},
                   {"widths", {6, 4, 6}},
                   {"mixture", {{"samples", 40}, {"dim", 6}, {"clusters", 2}, {"latent_dim", 2}}}};
  const ProblemInstance inst = build_problem(ae, 0.1);
  OptimizerConfig cfg;
  cfg.max_iterations = 50;
  cfg.max_sweeps = 1e7;
  cfg.init_scale = 0.3;
  cfg.checkpoint_every = 50;
  const RunTrace t = run(*inst.train, nullptr, cfg);
  SpectrumProbeOptions po;
  po.rank = 8;
  po.every = 50;
  std::ostringstream out;
  write_spectrum_csv(out, spectrum_probe(*inst.train, nullptr, t, po));
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  std::map<std::size_t, std::vector<double>> groups;
  while (std::getline(in, line)) {
    std::istringstream f(line);
    std::string it, idx, val, split;
    std::getline(f, it, ',');
    std::getline(f, idx, ',');
    std::getline(f, val, ',');
    std::getline(f, split, ',');
    CHECK(split == "train");
    groups[std::stoul(it)].push_back(std::strtod(val.c_str(), nullptr));
  }
  REQUIRE(groups.size() == 2);
  CHECK(groups.count(0) == 1);
  CHECK(groups.count(50) == 1);
  for (const auto& [k, vals] : groups) {
    CHECK(vals.size() == 8);
    for (std::size_t i = 1; i < vals.size(); ++i) CHECK(std::abs(vals[i]) <= std::abs(vals[i - 1]));
  }
}

TEST_CASE("Hessian batch size is irrelevant without Hessian noise") {
  json j = experiment("unused");
  j["problem"] = quadratic_problem(0.0);
  j["problem"]["grad_noise"] = 0.0;
  j["configs"] = {{{"name", "incg"}, {"method", "incg"}, {"max_iterations", 5}, {"max_sweeps", 1e6}}};
  j["seeds"] = {4};
  const auto rows = batch_sensitivity(parse_experiment(j), {10, 100, 200});
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].best_train == doctest::Approx(rows[1].best_train).epsilon(1e-10));
  CHECK(rows[1].best_train == doctest::Approx(rows[2].best_train).epsilon(1e-10));
  CHECK(rows[2].n_s == 200);
  std::ostringstream out;
  write_sensitivity_csv(out, rows);
  CHECK(reemit_csv(out.str()) == out.str());
}

TEST_CASE("noise-free bounds hold for every method") {
  QuadraticSpec spec;
  spec.spectrum = {1.0, 0.7, 0.5, 0.3, 0.2, 0.1};
  spec.n_samples = 50;
  spec.gamma = 0.1;
  spec.w_star = {0.5, -0.5, 1, 0, 0.2, -1};
  QuadraticProblem q(spec);
  OptimizerConfig cfg;
  cfg.gamma = 0.1;
  cfg.alpha_policy = AlphaPolicy::fixed;
  cfg.rank = 3;
  cfg.oversampling = 2;
  BoundOptions opt;
  opt.trials = 30;
  opt.spectrum_draws = 10;
  opt.krylov_iterations = 6;
  const BoundIngredients ing = estimate_bound_ingredients(q, cfg, opt);
  CHECK(ing.estimated.sigma <= 1e-10);
  CHECK(ing.estimated.v <= 1e-12);
  CHECK(ing.eps_h == 0.0);
  for (BoundKind k : all_bound_kinds()) {
    CAPTURE(to_string(k));
    const BoundCheckReport r = verify_bound(k, q, cfg, opt, ing);
    CHECK(r.violations == 0);
    CHECK(r.rows.size() == 3);
    for (const BoundRow& row : r.rows) CHECK(row.mean <= row.bound);
    CHECK(bound_kind_from_string(to_string(k)) == k);
    CHECK(json::parse(bound_report_json(r)).contains("rows"));
  }
  for (double alpha : {0.5, 0.8}) {
    cfg.alpha = alpha;
    CHECK(verify_bound(BoundKind::newton_cg, q, cfg, opt).violations == 0);
  }
}

TEST_CASE("bound checks reject unsupported setups") {
  QuadraticSpec spec;
  spec.spectrum = {1.0, 0.5};
  spec.n_samples = 10;
  spec.gamma = 0.1;
  QuadraticProblem q(spec);
  OptimizerConfig cfg;
  cfg.gamma = 0.1;
  BoundOptions opt;
  opt.trials = 5;
  CHECK_THROWS_AS(verify_bound(BoundKind::newton_cg, q, cfg, opt), ArgumentError);
  cfg.alpha_policy = AlphaPolicy::fixed;
  cfg.gamma = 0.2;
  CHECK_THROWS_AS(verify_bound(BoundKind::newton_cg, q, cfg, opt), ArgumentError);
  CHECK_THROWS_AS(bound_kind_from_string("theorem"), ArgumentError);
}

TEST_CASE("regularized stationary point") {
  QuadraticSpec spec;
  spec.spectrum = {2.0, 1.0};
  spec.n_samples = 5;
  spec.gamma = 0.5;
  spec.w_star = {1.0, 1.0};
  QuadraticProblem q(spec);
  const Vector w = regularized_stationary_point(q);
  CHECK(norm(q.gradient(w, q.full_batch())) <= 1e-12);
}

TEST_CASE("command line") {
  TempDir dir("snk_cli_test");
  const fs::path cfg = dir.path / "q.json";
  std::ofstream(cfg) << experiment((dir.path / "spec_out").string()).dump(2);

  CHECK(call_cli({"frobnicate"}) == 2);
  CHECK(call_cli({"run"}) == 2);

  CHECK(call_cli({"run", "--config", cfg.string(), "--seed", "1"}) == 0);
  CHECK(fs::exists(dir.path / "spec_out" / "incg_seed1.csv"));

  const fs::path out = dir.path / "flag_out";
  CHECK(call_cli({"run", "--config", cfg.string(), "--seed", "2", "--name", "gd", "--out", out.string()}) == 0);
  CHECK(fs::exists(out / "gd_seed2.csv"));

  const fs::path env_out = dir.path / "env_out";
  setenv("SNK_OUT", env_out.c_str(), 1);
  CHECK(call_cli({"run", "--config", cfg.string()}) == 0);
  unsetenv("SNK_OUT");
  CHECK(fs::exists(env_out / "incg_seed1.csv"));

  const fs::path ens = dir.path / "ens";
  CHECK(call_cli({"ensemble", "--config", cfg.string(), "--jobs", "2", "--out", ens.string()}) == 0);
  const std::string in_process = slurp(ens / "summary.csv");
  fs::remove(ens / "summary.csv");
  CHECK(call_cli({"summarize", "--dir", ens.string()}) == 0);
  CHECK(slurp(ens / "summary.csv") == in_process);

  CHECK(call_cli({"spectrum", "--config", cfg.string(), "--rank", "3", "--every", "2", "--out", ens.string()}) == 0);
  CHECK(fs::exists(ens / "spectrum_incg_seed1.csv"));

  CHECK(call_cli({"run", "--config", (dir.path / "missing.json").string()}) == 1);
  CHECK(call_cli({"run", "--config", cfg.string(), "--name", "nope"}) == 1);
}
