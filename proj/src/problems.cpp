#include "snk/problems.hpp"

#include <algorithm>
#include <cmath>

namespace snk {

namespace {

constexpr std::size_t kCacheEntries = 8;
// Per-sample Hessians are stored densely; refuse sizes that would not fit on
// a desk machine.
constexpr double kMaxStoredEntries = 6e7;

Vector offset(std::span<const double> w, const Vector& w_star) {
  Vector e(w.begin(), w.end());
  axpy(-1.0, w_star, e);
  return e;
}

}  // namespace

QuadraticProblem::QuadraticProblem(const QuadraticSpec& spec) : DifferentiableModel(spec.gamma) {
  const std::size_t d = spec.spectrum.size();
  if (d == 0) throw ArgumentError("quadratic: spectrum must be non-empty");
  if (!all_finite(spec.spectrum)) throw ArgumentError("quadratic: spectrum must be finite");
  if (spec.n_samples == 0) throw ArgumentError("quadratic: need at least one sample");
  if (!(spec.sigma_h >= 0.0) || !(spec.grad_noise >= 0.0)) {
    throw ArgumentError("quadratic: sigma_h and grad_noise must be non-negative");
  }
  if (!spec.w_star.empty() && spec.w_star.size() != d) {
    throw DimensionError("quadratic: w_star length does not match the spectrum");
  }
  if (static_cast<double>(spec.n_samples) * static_cast<double>(d * d) > kMaxStoredEntries) {
    throw ArgumentError("quadratic: n_samples * d^2 too large to store");
  }
  auto core = std::make_shared<Core>();
  core->spec = spec;
  SeededRng rng(spec.seed);
  core->basis = thin_qr(gaussian_matrix(rng, d, d));
  DenseMatrix scaled = core->basis;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) scaled(i, j) *= spec.spectrum[j];
  }
  DenseMatrix abar = scaled * core->basis.transpose();
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      const double s = 0.5 * (abar(i, j) + abar(j, i));
      abar(i, j) = s;
      abar(j, i) = s;
    }
  }
  core->abar = std::move(abar);
  core->w_star = spec.w_star.empty() ? Vector(d, 0.0) : spec.w_star;
  core_ = std::move(core);
  SeededRng sample_rng = rng.derive(0);
  samples_ = draw_samples(*core_, spec.n_samples, sample_rng);
}

QuadraticProblem::QuadraticProblem(std::shared_ptr<const Core> core, std::size_t n_samples,
                                   SeededRng rng, double gamma)
    : DifferentiableModel(gamma), core_(std::move(core)) {
  if (n_samples == 0) throw ArgumentError("quadratic: need at least one sample");
  samples_ = draw_samples(*core_, n_samples, rng);
}

std::unique_ptr<QuadraticProblem> QuadraticProblem::make_test_split(std::size_t n_samples,
                                                                    std::uint64_t stream) const {
  SeededRng rng = SeededRng(core_->spec.seed).derive(1000 + stream);
  return std::unique_ptr<QuadraticProblem>(new QuadraticProblem(core_, n_samples, rng, gamma()));
}

std::shared_ptr<const QuadraticProblem::Samples> QuadraticProblem::draw_samples(const Core& core,
                                                                                std::size_t n,
                                                                                SeededRng& rng) {
  const std::size_t d = core.abar.rows();
  const QuadraticSpec& spec = core.spec;
  auto out = std::make_shared<Samples>();
  std::vector<DenseMatrix> sym(n, DenseMatrix(d, d));
  std::vector<Vector> shifts(n, Vector(d, 0.0));
  DenseMatrix sym_mean(d, d);
  Vector shift_mean(d, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    if (spec.sigma_h > 0.0) {
      const DenseMatrix g = gaussian_matrix(rng, d, d);
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) sym[s](i, j) = 0.5 * (g(i, j) + g(j, i));
      }
      axpy(1.0, sym[s].entries(), sym_mean.entries());
    }
    if (spec.grad_noise > 0.0) {
      for (double& x : shifts[s]) x = spec.grad_noise * rng.normal();
      axpy(1.0, shifts[s], shift_mean);
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  scale(inv_n, sym_mean.entries());
  scale(inv_n, shift_mean);
  out->hessians.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    DenseMatrix a = core.abar;
    if (spec.sigma_h > 0.0) {
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
          a(i, j) += spec.sigma_h * (sym[s](i, j) - sym_mean(i, j));
        }
      }
    }
    out->hessians.push_back(std::move(a));
    if (spec.grad_noise > 0.0) axpy(-1.0, shift_mean, shifts[s]);
  }
  out->shifts = std::move(shifts);
  return out;
}

DenseMatrix QuadraticProblem::batch_hessian(const Batch& batch) const {
  if (batch.indices.empty()) throw ArgumentError("batch_hessian: empty batch");
  std::vector<std::size_t> sorted = batch.indices;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.back() >= sample_count()) throw ArgumentError("batch_hessian: index out of range");
  DenseMatrix h = sums(sorted)->hessian;
  scale(1.0 / static_cast<double>(sorted.size()), h.entries());
  return h;
}

std::shared_ptr<const QuadraticProblem::BatchSums> QuadraticProblem::sums(
    std::span<const std::size_t> sorted) const {
  std::vector<std::size_t> key(sorted.begin(), sorted.end());
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
  }
  const std::size_t d = dim();
  auto s = std::make_shared<BatchSums>();
  s->hessian = DenseMatrix(d, d);
  s->shift.assign(d, 0.0);
  for (std::size_t i : sorted) {
    axpy(1.0, samples_->hessians[i].entries(), s->hessian.entries());
    axpy(1.0, samples_->shifts[i], s->shift);
  }
  std::lock_guard<std::mutex> lock(cache_mutex_);
  if (cache_.emplace(key, s).second) {
    cache_order_.push_back(key);
    if (cache_order_.size() > kCacheEntries) {
      cache_.erase(cache_order_.front());
      cache_order_.erase(cache_order_.begin());
    }
  }
  return s;
}

double QuadraticProblem::sample_loss(std::span<const double> w, std::size_t i) const {
  const Vector e = offset(w, core_->w_star);
  const Vector ae = samples_->hessians[i].multiply(e);
  return 0.5 * dot(e, ae) + dot(samples_->shifts[i], e);
}

double QuadraticProblem::sample_value_and_gradient(std::span<const double> w, std::size_t i,
                                                   std::span<double> grad) const {
  const Vector e = offset(w, core_->w_star);
  const Vector ae = samples_->hessians[i].multiply(e);
  axpy(1.0, ae, grad);
  axpy(1.0, samples_->shifts[i], grad);
  return 0.5 * dot(e, ae) + dot(samples_->shifts[i], e);
}

void QuadraticProblem::sample_hvp(std::span<const double>, std::size_t i,
                                  std::span<const double> v, std::span<double> out) const {
  axpy(1.0, samples_->hessians[i].multiply(v), out);
}

double QuadraticProblem::batch_loss_sum(std::span<const double> w,
                                        std::span<const std::size_t> sorted) const {
  const auto s = sums(sorted);
  const Vector e = offset(w, core_->w_star);
  return 0.5 * dot(e, s->hessian.multiply(e)) + dot(s->shift, e);
}

double QuadraticProblem::batch_value_and_gradient_sum(std::span<const double> w,
                                                      std::span<const std::size_t> sorted,
                                                      std::span<double> grad) const {
  const auto s = sums(sorted);
  const Vector e = offset(w, core_->w_star);
  const Vector he = s->hessian.multiply(e);
  axpy(1.0, he, grad);
  axpy(1.0, s->shift, grad);
  return 0.5 * dot(e, he) + dot(s->shift, e);
}

void QuadraticProblem::batch_hvp_sum(std::span<const double>, std::span<const std::size_t> sorted,
                                     std::span<const double> v, std::span<double> out) const {
  axpy(1.0, sums(sorted)->hessian.multiply(v), out);
}

// ---------------------------------------------------------------------------

IndefiniteQuadratic::IndefiniteQuadratic(Vector diagonal, double gamma)
    : DifferentiableModel(gamma), diag_(std::move(diagonal)) {
  if (diag_.empty()) throw ArgumentError("indefinite-quadratic: empty spectrum");
  if (!all_finite(diag_)) throw ArgumentError("indefinite-quadratic: spectrum must be finite");
}

double IndefiniteQuadratic::sample_loss(std::span<const double> w, std::size_t) const {
  double s = 0.0;
  for (std::size_t j = 0; j < diag_.size(); ++j) s += diag_[j] * w[j] * w[j];
  return 0.5 * s;
}

double IndefiniteQuadratic::sample_value_and_gradient(std::span<const double> w, std::size_t i,
                                                      std::span<double> grad) const {
  for (std::size_t j = 0; j < diag_.size(); ++j) grad[j] += diag_[j] * w[j];
  return sample_loss(w, i);
}

void IndefiniteQuadratic::sample_hvp(std::span<const double>, std::size_t,
                                     std::span<const double> v, std::span<double> out) const {
  for (std::size_t j = 0; j < diag_.size(); ++j) out[j] += diag_[j] * v[j];
}

double MonkeySaddle::sample_loss(std::span<const double> w, std::size_t) const {
  const double x = w[0];
  const double y = w[1];
  return x * x * x - 3.0 * x * y * y;
}

double MonkeySaddle::sample_value_and_gradient(std::span<const double> w, std::size_t i,
                                               std::span<double> grad) const {
  const double x = w[0];
  const double y = w[1];
  grad[0] += 3.0 * x * x - 3.0 * y * y;
  grad[1] += -6.0 * x * y;
  return sample_loss(w, i);
}

void MonkeySaddle::sample_hvp(std::span<const double> w, std::size_t, std::span<const double> v,
                              std::span<double> out) const {
  const double x = w[0];
  const double y = w[1];
  out[0] += 6.0 * x * v[0] - 6.0 * y * v[1];
  out[1] += -6.0 * y * v[0] - 6.0 * x * v[1];
}

std::unique_ptr<DifferentiableModel> make_saddle_problem(const std::string& kind,
                                                         const Vector& spectrum, double gamma) {
  if (kind == "indefinite-quadratic") {
    return std::make_unique<IndefiniteQuadratic>(spectrum.empty() ? Vector{1.0, -1.0} : spectrum,
                                                 gamma);
  }
  if (kind == "cubic-monkey-saddle") return std::make_unique<MonkeySaddle>(gamma);
  throw ArgumentError("unknown saddle problem '" + kind +
                      "' (expected indefinite-quadratic or cubic-monkey-saddle)");
}

}  // namespace snk
