#include "snk/config_io.hpp"

#include <set>

namespace snk {

namespace {

const char* forcing_name(ForcingSchedule::Mode m) {
  return m == ForcingSchedule::Mode::constant ? "constant" : "gradient-norm";
}

}  // namespace

nlohmann::json config_to_json(const OptimizerConfig& c) {
  nlohmann::json j;
  j["method"] = to_string(c.method);
  j["gamma"] = c.gamma;
  j["rank"] = c.rank;
  j["oversampling"] = c.oversampling;
  j["forcing"] = forcing_name(c.forcing.mode);
  j["eta_max"] = c.forcing.eta_max;
  j["eta_const"] = c.forcing.eta_const;
  j["krylov_max_iter"] = c.krylov_max_iter;
  j["alpha_policy"] = c.alpha_policy == AlphaPolicy::fixed ? "fixed" : "line-search";
  j["alpha"] = c.alpha;
  j["line_search_take_best"] = c.line_search_take_best;
  j["eps_g"] = c.eps_g;
  j["eps_h"] = c.eps_h;
  j["n_x"] = c.n_x;
  j["n_s"] = c.n_s;
  j["batching"] = c.batching == Batching::semi_stochastic ? "semi-stochastic" : "fully-stochastic";
  j["stochastic_fraction"] = c.stochastic_fraction;
  j["max_sweeps"] = c.max_sweeps;
  j["max_iterations"] = c.max_iterations;
  j["seed"] = c.seed;
  j["warmup_gd_steps"] = c.warmup_gd_steps;
  j["init_scale"] = c.init_scale;
  j["n_test"] = c.n_test;
  j["checkpoint_every"] = c.checkpoint_every;
  j["record_timing"] = c.record_timing;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_epsilon"] = c.adam_epsilon;
  return j;
}

OptimizerConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ArgumentError("optimizer config must be a JSON object");
  static const std::set<std::string> known = {
      "method", "gamma", "rank", "oversampling", "forcing", "eta_max", "eta_const",
      "krylov_max_iter", "alpha_policy", "alpha", "line_search_take_best", "eps_g", "eps_h",
      "n_x", "n_s", "batching", "stochastic_fraction", "max_sweeps", "max_iterations", "seed",
      "warmup_gd_steps", "init_scale", "n_test", "checkpoint_every", "record_timing",
      "adam_beta1", "adam_beta2", "adam_epsilon", "name"};
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) throw ArgumentError("unknown optimizer config key '" + item.key() + "'");
  }
  OptimizerConfig c;
  try {
    if (j.contains("method")) c.method = method_from_string(j.at("method").get<std::string>());
    c.gamma = j.value("gamma", c.gamma);
    c.rank = j.value("rank", c.rank);
    c.oversampling = j.value("oversampling", c.oversampling);
    if (j.contains("forcing")) {
      const std::string f = j.at("forcing").get<std::string>();
      if (f == "gradient-norm") {
        c.forcing.mode = ForcingSchedule::Mode::gradient_norm;
      } else if (f == "constant") {
        c.forcing.mode = ForcingSchedule::Mode::constant;
      } else {
        throw ArgumentError("forcing must be gradient-norm or constant, got '" + f + "'");
      }
    }
    c.forcing.eta_max = j.value("eta_max", c.forcing.eta_max);
    c.forcing.eta_const = j.value("eta_const", c.forcing.eta_const);
    c.krylov_max_iter = j.value("krylov_max_iter", c.krylov_max_iter);
    if (j.contains("alpha_policy")) {
      const std::string a = j.at("alpha_policy").get<std::string>();
      if (a == "fixed") {
        c.alpha_policy = AlphaPolicy::fixed;
      } else if (a == "line-search") {
        c.alpha_policy = AlphaPolicy::line_search;
      } else {
        throw ArgumentError("alpha_policy must be fixed or line-search, got '" + a + "'");
      }
    }
    c.alpha = j.value("alpha", c.alpha);
    c.line_search_take_best = j.value("line_search_take_best", c.line_search_take_best);
    c.eps_g = j.value("eps_g", c.eps_g);
    c.eps_h = j.value("eps_h", c.eps_h);
    c.n_x = j.value("n_x", c.n_x);
    c.n_s = j.value("n_s", c.n_s);
    if (j.contains("batching")) {
      const std::string b = j.at("batching").get<std::string>();
      if (b == "semi-stochastic") {
        c.batching = Batching::semi_stochastic;
      } else if (b == "fully-stochastic") {
        c.batching = Batching::fully_stochastic;
      } else {
        throw ArgumentError("batching must be semi-stochastic or fully-stochastic, got '" + b + "'");
      }
    }
    c.stochastic_fraction = j.value("stochastic_fraction", c.stochastic_fraction);
    c.max_sweeps = j.value("max_sweeps", c.max_sweeps);
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    c.seed = j.value("seed", c.seed);
    const bool warm_default = c.method == Method::inminres || c.method == Method::ingmres;
    c.warmup_gd_steps = j.value("warmup_gd_steps", warm_default ? std::size_t{2} : std::size_t{0});
    c.init_scale = j.value("init_scale", c.init_scale);
    c.n_test = j.value("n_test", c.n_test);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.record_timing = j.value("record_timing", c.record_timing);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("malformed optimizer config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace snk
