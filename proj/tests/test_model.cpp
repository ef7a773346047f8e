#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>

#include "helpers.hpp"
#include "snk/assumptions.hpp"
#include "snk/autoencoder.hpp"
#include "snk/problems.hpp"

using namespace snk;

namespace {

QuadraticSpec small_quadratic(double gamma, double sigma_h = 0.05) {
  QuadraticSpec s;
  s.spectrum = {4, 2, 1, 0.5, 0.25};
  s.sigma_h = sigma_h;
  s.grad_noise = 0.1;
  s.w_star = {1, -1, 0.5, 0, 2};
  s.n_samples = 40;
  s.gamma = gamma;
  s.seed = 3;
  return s;
}

std::shared_ptr<const Dataset> mixture(std::size_t n, std::size_t dim, std::uint64_t seed) {
  SeededRng rng(seed);
  MixtureOptions o;
  o.samples = n;
  o.dim = dim;
  o.clusters = 3;
  o.latent_dim = 2;
  return std::make_shared<const Dataset>(make_gaussian_mixture(rng, o));
}

// Straight-line forward pass with the documented layer layout.
Vector reference_forward(const std::vector<std::size_t>& widths, std::span<const double> w,
                         const Vector& x) {
  Vector a = x;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t in = widths[l], out = widths[l + 1];
    Vector z(out);
    for (std::size_t i = 0; i < out; ++i) {
      double s = w[off + in * out + i];
      for (std::size_t j = 0; j < in; ++j) s += w[off + i * in + j] * a[j];
      z[i] = (l + 2 == widths.size()) ? s : std::tanh(s);
    }
    off += in * out + out;
    a = z;
  }
  return a;
}

double directional_fd(const DifferentiableModel& m, const Vector& w, const Vector& p,
                      const Batch& b, double h) {
  return (m.loss(add_scaled(w, h, p), b) - m.loss(add_scaled(w, -h, p), b)) / (2 * h);
}

}  // namespace

TEST_CASE("quadratic loss and gradient closed forms") {
  QuadraticProblem q0(small_quadratic(0.0));
  const Batch all = q0.full_batch();
  CHECK(std::abs(q0.loss(q0.w_star(), all)) <= 1e-14);
  const Vector g0 = q0.gradient(q0.w_star(), all);
  CHECK(max_abs(g0) <= 1e-12);

  QuadraticProblem q(small_quadratic(0.3));
  SeededRng rng(4);
  const Vector w = gaussian_vector(rng, 5);
  const Vector diff = add_scaled(w, -1.0, q.w_star());
  Vector expect = q.mean_hessian().multiply(diff);
  axpy(0.3, w, expect);
  CHECK(test::rel_diff(q.gradient(w, all), expect) <= 1e-12);

  const Vector v = gaussian_vector(rng, 5);
  Vector hv = q.mean_hessian().multiply(v);
  axpy(0.3, v, hv);
  CHECK(test::rel_diff(q.hvp(w, all, v), hv) <= 1e-12);
}

TEST_CASE("quadratic mean Hessian has the prescribed spectrum") {
  QuadraticProblem q(small_quadratic(0.0, 0.3));
  const DenseMatrix mean = q.batch_hessian(q.full_batch());
  CHECK(test::max_abs_diff(mean, q.mean_hessian()) <= 1e-12);
  const SymEig e = sym_eig(mean);
  const Vector want{4, 2, 1, 0.5, 0.25};
  for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(e.values[i] - want[i]) <= 1e-10);
  for (std::size_t i = 0; i < q.sample_count(); ++i) CHECK(q.sample_hessian(i).is_symmetric());
}

TEST_CASE("test split shares the mean Hessian and minimizer") {
  QuadraticProblem q(small_quadratic(0.1));
  auto t = q.make_test_split(25);
  CHECK(t->sample_count() == 25);
  CHECK(t->w_star() == q.w_star());
  CHECK(test::max_abs_diff(t->mean_hessian(), q.mean_hessian()) == 0.0);
}

TEST_CASE("sweep metering per call") {
  QuadraticProblem q(small_quadratic(0.1));
  SeededRng rng(1);
  const Batch b = sample_batch(rng, q.sample_count(), 7, false);
  const Vector w(5, 0.5), v(5, 1.0);
  auto& led = q.ledger();
  q.loss(w, b);
  CHECK(led.forward_count() == 7);
  CHECK(led.backward_count() == 0);
  q.gradient(w, b);
  CHECK(led.forward_count() == 14);
  CHECK(led.backward_count() == 7);
  q.hvp(w, b, v);
  CHECK(led.forward_count() == 28);
  CHECK(led.backward_count() == 21);
  q.data_hvp(w, b, v);
  CHECK(led.forward_count() == 42);
  CHECK(led.backward_count() == 35);
  CHECK(led.sweeps() == 38.5);
  q.monitor_loss(w, b);
  q.monitor_gradient(w, b);
  CHECK(led.forward_count() == 42);
}

TEST_CASE("autoencoder at zero weights outputs zero") {
  auto data = mixture(20, 6, 2);
  FeedforwardAutoencoder ae({6, 3, 6}, data, 0.0);
  CHECK(ae.dim() == 6 * 3 + 3 + 3 * 6 + 6);
  CHECK(FeedforwardAutoencoder::parameter_count({16, 4, 16}) == 148);
  const Vector w(ae.dim(), 0.0);
  double half_sq = 0.0;
  for (const Sample& s : data->samples) half_sq += 0.5 * dot(s.y, s.y);
  half_sq /= 20.0;
  CHECK(ae.loss(w, ae.full_batch()) == doctest::Approx(half_sq).epsilon(1e-14));
}

TEST_CASE("autoencoder loss matches a reference forward pass") {
  auto data = mixture(10, 5, 6);
  const std::vector<std::size_t> widths{5, 4, 2, 4, 5};
  FeedforwardAutoencoder ae(widths, data, 0.0);
  SeededRng rng(7);
  const Vector w = gaussian_vector(rng, ae.dim());
  for (std::size_t i = 0; i < 3; ++i) {
    const Sample& s = data->samples[i];
    const Vector out = reference_forward(widths, w, s.x);
    double ref = 0.0;
    for (std::size_t k = 0; k < out.size(); ++k) ref += 0.5 * (out[k] - s.y[k]) * (out[k] - s.y[k]);
    const double got = ae.loss(w, Batch{{i}});
    CHECK(std::abs(got - ref) <= 1e-14 * std::abs(ref));
    CHECK(test::rel_diff(ae.predict(w, s.x), out) <= 1e-15);
  }
}

TEST_CASE("autoencoder derivatives against finite differences") {
  auto data = mixture(16, 6, 9);
  for (const char* act : {"tanh", "softplus", "sigmoid"}) {
    CAPTURE(act);
    FeedforwardAutoencoder ae({6, 5, 3, 5, 6}, data, 0.05, act);
    SeededRng rng(11);
    const Batch b = ae.full_batch();
    const Vector w = add_scaled(Vector(ae.dim(), 0.0), 0.5, gaussian_vector(rng, ae.dim()));
    const Vector g = ae.gradient(w, b);
    for (int t = 0; t < 20; ++t) {
      const Vector p = gaussian_vector(rng, ae.dim());
      const double d = dot(g, p);
      CHECK(std::abs(d - directional_fd(ae, w, p, b, 1e-5)) <= 1e-6 * (1.0 + std::abs(d)));
    }
    for (int t = 0; t < 5; ++t) {
      const Vector v = gaussian_vector(rng, ae.dim());
      const double h = 1e-5;
      Vector fd = ae.gradient(add_scaled(w, h, v), b);
      axpy(-1.0, ae.gradient(add_scaled(w, -h, v), b), fd);
      scale(1.0 / (2 * h), fd);
      CHECK(test::rel_diff(ae.hvp(w, b, v), fd) <= 1e-5);
    }
  }
}

TEST_CASE("Hessian-vector products are symmetric bilinear forms") {
  auto data = mixture(12, 5, 3);
  FeedforwardAutoencoder ae({5, 4, 5}, data, 0.1);
  QuadraticProblem q(small_quadratic(0.1, 0.2));
  auto saddle = make_saddle_problem("cubic-monkey-saddle");
  const DifferentiableModel* models[] = {&ae, &q, saddle.get()};
  SeededRng rng(17);
  for (const DifferentiableModel* m : models) {
    const Vector w = gaussian_vector(rng, m->dim());
    const Batch b = m->full_batch();
    for (int t = 0; t < 10; ++t) {
      const Vector u = gaussian_vector(rng, m->dim()), v = gaussian_vector(rng, m->dim());
      const double a = dot(u, m->hvp(w, b, v)), c = dot(v, m->hvp(w, b, u));
      CHECK(std::abs(a - c) <= 1e-10 * std::max(1.0, std::abs(a)));
    }
  }
}

TEST_CASE("Tikhonov term enters gradient and hvp exactly") {
  auto data = mixture(8, 4, 1);
  FeedforwardAutoencoder a0({4, 3, 4}, data, 0.0), a1({4, 3, 4}, data, 0.25);
  SeededRng rng(2);
  const Vector w = gaussian_vector(rng, a0.dim()), v = gaussian_vector(rng, a0.dim());
  const Batch b = a0.full_batch();
  const Vector g0 = a0.gradient(w, b), g1 = a1.gradient(w, b);
  const Vector h0 = a0.hvp(w, b, v), h1 = a1.hvp(w, b, v);
  for (std::size_t i = 0; i < w.size(); ++i) {
    CHECK(g1[i] - g0[i] == doctest::Approx(0.25 * w[i]).epsilon(1e-12));
    CHECK(h1[i] - h0[i] == doctest::Approx(0.25 * v[i]).epsilon(1e-12));
  }
  CHECK(test::rel_diff(a1.data_hvp(w, b, v), h0) == 0.0);
}

TEST_CASE("singleton gradients average to the full gradient") {
  auto data = mixture(9, 4, 4);
  FeedforwardAutoencoder ae({4, 3, 4}, data, 0.0);
  SeededRng rng(6);
  const Vector w = gaussian_vector(rng, ae.dim());
  Vector mean(ae.dim(), 0.0);
  for (std::size_t i = 0; i < 9; ++i) axpy(1.0 / 9.0, ae.gradient(w, Batch{{i}}), mean);
  const Vector full = ae.gradient(w, ae.full_batch());
  for (std::size_t i = 0; i < mean.size(); ++i) CHECK(std::abs(mean[i] - full[i]) <= 1e-12);
}

TEST_CASE("repeated evaluations agree exactly") {
  QuadraticProblem q(small_quadratic(0.1, 0.2));
  const Vector w(5, 0.3);
  const Batch b{{4, 1, 9}};
  CHECK(q.loss(w, b) == q.loss(w, b));
  CHECK(q.gradient(w, b) == q.gradient(w, Batch{{1, 4, 9}}));
}

TEST_CASE("sample_batch") {
  SeededRng rng(8);
  Batch perm = sample_batch(rng, 12, 12, false);
  std::sort(perm.indices.begin(), perm.indices.end());
  for (std::size_t i = 0; i < 12; ++i) CHECK(perm.indices[i] == i);

  SeededRng a(3), b(3);
  CHECK(sample_batch(a, 50, 10, false).indices == sample_batch(b, 50, 10, false).indices);

  CHECK_THROWS_AS(sample_batch(rng, 5, 6, false), ArgumentError);
  CHECK_THROWS_AS(sample_batch(rng, 5, 0, true), ArgumentError);

  std::vector<double> counts(10, 0.0);
  SeededRng m(12);
  for (int t = 0; t < 10000; ++t) counts[sample_batch(m, 10, 1, true).indices[0]] += 1;
  const double sd = std::sqrt(10000 * 0.1 * 0.9);
  for (double c : counts) CHECK(std::abs(c - 1000.0) <= 3 * sd);
}

TEST_CASE("subsample draws distinct members") {
  SeededRng rng(4);
  const Batch from{{3, 7, 11, 19, 23}};
  Batch s = subsample(rng, from, 3);
  std::sort(s.indices.begin(), s.indices.end());
  CHECK(std::adjacent_find(s.indices.begin(), s.indices.end()) == s.indices.end());
  for (auto i : s.indices) CHECK(std::find(from.indices.begin(), from.indices.end(), i) != from.indices.end());
}

TEST_CASE("saddle problems") {
  auto s = make_saddle_problem("indefinite-quadratic", {1, -1}, 0.0);
  const Batch b = s->full_batch();
  const Vector w{0.3, -0.7};
  // One exact Newton step: solve H p = −g with the (constant) Hessian.
  const Vector g = s->gradient(w, b);
  DenseMatrix h(2, 2);
  for (std::size_t j = 0; j < 2; ++j) {
    Vector e(2, 0.0);
    e[j] = 1.0;
    h.set_column(j, s->hvp(w, b, e));
  }
  const Vector p = test::dense_solve(h, add_scaled(Vector(2, 0.0), -1.0, g));
  CHECK(norm(add_scaled(w, 1.0, p)) <= 1e-12);

  auto monkey = make_saddle_problem("cubic-monkey-saddle");
  CHECK(monkey->loss(Vector{1, 1}, monkey->full_batch()) == doctest::Approx(-2.0));
  CHECK_THROWS_AS(make_saddle_problem("nonsense"), ArgumentError);
}

TEST_CASE("overflowing loss reports the weight norm") {
  auto s = make_saddle_problem("indefinite-quadratic", {1, 1}, 0.0);
  const Vector w{1e200, 1e200};
  try {
    s->loss(w, s->full_batch());
    FAIL("expected a non-finite loss error");
  } catch (const NonFiniteLossError& e) {
    CHECK(e.w_norm() > 1e200);
  }
}

TEST_CASE("dataset and checkpoint files round-trip") {
  const auto dir = std::filesystem::temp_directory_path() / "snk_model_test";
  std::filesystem::create_directories(dir);
  auto data = mixture(5, 3, 1);
  save_dataset_csv(*data, (dir / "d.csv").string());
  const Dataset back = load_dataset_csv((dir / "d.csv").string());
  REQUIRE(back.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(back.samples[i].x == data->samples[i].x);
    CHECK(back.samples[i].y == data->samples[i].y);
  }

  Checkpoint c{{0.1, -2.5, 1e-300, 3.0}, {1, 1, 1}, "tanh", 44};
  save_checkpoint((dir / "w.csv").string(), c);
  const Checkpoint c2 = load_checkpoint((dir / "w.csv").string());
  CHECK(c2.weights == c.weights);
  CHECK(c2.widths == c.widths);
  CHECK(c2.activation == "tanh");
  CHECK(c2.seed == 44);
  CHECK_THROWS_AS(load_dataset_csv((dir / "missing.csv").string()), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("assumption constants on quadratics") {
  QuadraticSpec spec;
  spec.spectrum = {10, 5, 2, 1, 0.5, 0.1};
  spec.sigma_h = 0.0;
  spec.grad_noise = 0.2;
  spec.n_samples = 200;
  spec.seed = 5;
  QuadraticProblem q(spec);
  SeededRng rng(1);
  const std::vector<Vector> probes{Vector(6, 0.0), gaussian_vector(rng, 6), gaussian_vector(rng, 6)};
  const AssumptionConstants c = estimate_assumption_constants(q, probes, rng);
  CHECK(c.M <= 1e-8);
  CHECK(c.sigma <= 1e-10);
  CHECK(std::abs(c.L - 10.0) <= 1e-6);
  CHECK(c.v > 0.0);

  spec.sigma_h = 0.1;
  QuadraticProblem noisy(spec);
  ConstantsOptions opt;
  opt.hessian_batch = 20;
  const AssumptionConstants cn = estimate_assumption_constants(noisy, probes, rng, opt);
  CHECK(cn.M <= 1e-8);
  CHECK(cn.sigma > 0.0);
  // A batch of 20 perturbs the top eigenvalue by about σ_H·√(2d/20).
  CHECK(cn.L >= 10.0 - 1e-6);
  CHECK(cn.L <= 10.0 + 0.1 * 6.0);

  CHECK_THROWS_AS(estimate_assumption_constants(q, {Vector(6, 0.0)}, rng), ArgumentError);
}
