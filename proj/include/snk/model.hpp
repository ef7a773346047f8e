#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "snk/numerics.hpp"

namespace snk {

struct Sample {
  Vector x;
  Vector y;
};

struct Dataset {
  std::string name;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  std::size_t input_dim() const { return samples.empty() ? 0 : samples.front().x.size(); }
  std::size_t target_dim() const { return samples.empty() ? 0 : samples.front().y.size(); }
  // Throws ArgumentError unless non-empty, homogeneous and finite.
  void validate() const;
};

// Indices into a model's sample set.  Draws without replacement are distinct;
// draws with replacement may repeat an index.
struct Batch {
  std::vector<std::size_t> indices;
  std::size_t size() const { return indices.size(); }
};

Batch full_batch(std::size_t n);
Batch sample_batch(SeededRng& rng, std::size_t population, std::size_t size, bool replacement);
Batch sample_batch(SeededRng& rng, const Dataset& dataset, std::size_t size, bool replacement);
// Uniform draw of `size` distinct members of `from`.
Batch subsample(SeededRng& rng, const Batch& from, std::size_t size);

// Per-sample evaluation counters.  One sweep is one forward plus one backward
// evaluation, so sweeps() = (forward + backward) / 2.
class SweepLedger {
 public:
  void add_forward(std::uint64_t n) { forward_.fetch_add(n, std::memory_order_relaxed); }
  void add_backward(std::uint64_t n) { backward_.fetch_add(n, std::memory_order_relaxed); }
  std::uint64_t forward_count() const { return forward_.load(std::memory_order_relaxed); }
  std::uint64_t backward_count() const { return backward_.load(std::memory_order_relaxed); }
  double sweeps() const {
    return static_cast<double>(forward_count() + backward_count()) / 2.0;
  }

 private:
  std::atomic<std::uint64_t> forward_{0};
  std::atomic<std::uint64_t> backward_{0};
};

struct ValueAndGradient {
  double value = 0.0;
  Vector gradient;
};

// Tikhonov-regularized empirical risk
//   F(w) = (1/N) sum_{i in batch} F_i(w) + (gamma/2) |w|^2
// with metered loss, gradient and Hessian-vector products.
//
// Metering, per sample in the batch:
//   loss                 1 forward
//   gradient             1 forward + 1 backward
//   hvp / data_hvp       2 forward + 2 backward (gradient pass + R-pass)
// monitor_* evaluations are telemetry and are not metered.
//
// Batch sums are accumulated in ascending sample-index order, so results are
// bitwise reproducible for a given (w, batch).
class DifferentiableModel {
 public:
  virtual ~DifferentiableModel() = default;
  DifferentiableModel(const DifferentiableModel&) = delete;
  DifferentiableModel& operator=(const DifferentiableModel&) = delete;

  virtual std::size_t dim() const = 0;
  virtual std::size_t sample_count() const = 0;
  virtual std::string name() const = 0;

  double gamma() const { return gamma_; }
  SweepLedger& ledger() const { return ledger_; }

  double loss(std::span<const double> w, const Batch& batch) const;
  Vector gradient(std::span<const double> w, const Batch& batch) const;
  ValueAndGradient value_and_gradient(std::span<const double> w, const Batch& batch) const;
  // Hessian of the regularized risk applied to v (includes + gamma v).
  Vector hvp(std::span<const double> w, const Batch& batch, std::span<const double> v) const;
  // Hessian of the unregularized data term applied to v.
  Vector data_hvp(std::span<const double> w, const Batch& batch, std::span<const double> v) const;

  double monitor_loss(std::span<const double> w, const Batch& batch) const;
  Vector monitor_gradient(std::span<const double> w, const Batch& batch) const;

  Batch full_batch() const { return snk::full_batch(sample_count()); }

 protected:
  explicit DifferentiableModel(double gamma);

  virtual double sample_loss(std::span<const double> w, std::size_t i) const = 0;
  // Adds grad F_i(w) into `grad` and returns F_i(w).
  virtual double sample_value_and_gradient(std::span<const double> w, std::size_t i,
                                           std::span<double> grad) const = 0;
  // Adds hess F_i(w) v into `out`.
  virtual void sample_hvp(std::span<const double> w, std::size_t i, std::span<const double> v,
                          std::span<double> out) const = 0;

  // Batch-level sums over sorted indices.  The defaults loop over samples;
  // models with cheaper closed forms override them.
  virtual double batch_loss_sum(std::span<const double> w,
                                std::span<const std::size_t> sorted) const;
  virtual double batch_value_and_gradient_sum(std::span<const double> w,
                                              std::span<const std::size_t> sorted,
                                              std::span<double> grad) const;
  virtual void batch_hvp_sum(std::span<const double> w, std::span<const std::size_t> sorted,
                             std::span<const double> v, std::span<double> out) const;

 private:
  std::vector<std::size_t> checked_sorted(std::span<const double> w, const Batch& batch) const;
  void check_value(double value, std::span<const double> w) const;
  double regularized_loss(std::span<const double> w, const Batch& batch) const;
  ValueAndGradient regularized_value_and_gradient(std::span<const double> w,
                                                  const Batch& batch) const;
  Vector hvp_impl(std::span<const double> w, const Batch& batch, std::span<const double> v,
                  bool regularized) const;

  double gamma_;
  mutable SweepLedger ledger_;
};

// Dataset CSV: header x0,...,xn,y0,...,ym then one sample per row.
Dataset load_dataset_csv(const std::string& path, const std::string& name = "");
void save_dataset_csv(const Dataset& dataset, const std::string& path);

struct MixtureOptions {
  std::size_t samples = 512;
  std::size_t dim = 24;
  std::size_t clusters = 4;
  std::size_t latent_dim = 3;   // samples live near a latent_dim-dimensional subspace
  double cluster_spread = 0.5;
  double noise = 0.05;
  double offset = 0.0;          // added to every coordinate, like raw pixel intensities
};

// Auto-associative mixture-of-Gaussians data (y = x).
Dataset make_gaussian_mixture(SeededRng& rng, const MixtureOptions& options);

}  // namespace snk
