#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "snk/model.hpp"

namespace snk {

struct QuadraticSpec {
  Vector spectrum;          // eigenvalues of the mean Hessian; its length is d
  double sigma_h = 0.0;     // per-sample Hessian perturbation scale
  double grad_noise = 0.0;  // per-sample linear-term scale
  Vector w_star;            // empty means the origin
  std::size_t n_samples = 1000;
  double gamma = 0.0;
  std::uint64_t seed = 1;
};

// Sampled quadratic
//   F_i(w) = ½ (w − w*)ᵀ A_i (w − w*) + b_iᵀ (w − w*)
// with A_i = Ā + σ_H (S_i − S̄), S_i the symmetric part of a Gaussian matrix,
// and b_i Gaussian; both are mean-corrected so that the sample means are
// exactly Ā and 0.  Ā = Q diag(spectrum) Qᵀ for a random orthogonal Q.
// Hence w* is stationary for the unregularized risk, the Hessian is constant
// (M = 0), and tr Cov(∇F_i) and ‖E(A_i − Ā)²‖ are known in expectation.
class QuadraticProblem final : public DifferentiableModel {
 public:
  explicit QuadraticProblem(const QuadraticSpec& spec);

  std::size_t dim() const override { return core_->abar.rows(); }
  std::size_t sample_count() const override { return samples_->hessians.size(); }
  std::string name() const override { return "quadratic"; }

  // Held-out samples from the same distribution (shared Ā, Q and w*).
  std::unique_ptr<QuadraticProblem> make_test_split(std::size_t n_samples,
                                                    std::uint64_t stream = 1) const;

  const QuadraticSpec& spec() const { return core_->spec; }
  const Vector& w_star() const { return core_->w_star; }
  const DenseMatrix& basis() const { return core_->basis; }
  // Ā, without the Tikhonov shift.
  const DenseMatrix& mean_hessian() const { return core_->abar; }
  const DenseMatrix& sample_hessian(std::size_t i) const { return samples_->hessians.at(i); }
  const Vector& sample_shift(std::size_t i) const { return samples_->shifts.at(i); }
  // Mean of A_i over the batch (duplicates counted), without the shift γI.
  DenseMatrix batch_hessian(const Batch& batch) const;

 protected:
  double sample_loss(std::span<const double> w, std::size_t i) const override;
  double sample_value_and_gradient(std::span<const double> w, std::size_t i,
                                   std::span<double> grad) const override;
  void sample_hvp(std::span<const double> w, std::size_t i, std::span<const double> v,
                  std::span<double> out) const override;

  double batch_loss_sum(std::span<const double> w,
                        std::span<const std::size_t> sorted) const override;
  double batch_value_and_gradient_sum(std::span<const double> w,
                                      std::span<const std::size_t> sorted,
                                      std::span<double> grad) const override;
  void batch_hvp_sum(std::span<const double> w, std::span<const std::size_t> sorted,
                     std::span<const double> v, std::span<double> out) const override;

 private:
  struct Core {
    QuadraticSpec spec;
    DenseMatrix basis;
    DenseMatrix abar;
    Vector w_star;
  };
  struct Samples {
    std::vector<DenseMatrix> hessians;
    std::vector<Vector> shifts;
  };
  struct BatchSums {
    DenseMatrix hessian;  // Σ A_i
    Vector shift;         // Σ b_i
  };

  QuadraticProblem(std::shared_ptr<const Core> core, std::size_t n_samples, SeededRng rng,
                   double gamma);
  static std::shared_ptr<const Samples> draw_samples(const Core& core, std::size_t n,
                                                     SeededRng& rng);
  std::shared_ptr<const BatchSums> sums(std::span<const std::size_t> sorted) const;

  std::shared_ptr<const Core> core_;
  std::shared_ptr<const Samples> samples_;

  // Batch sums keyed by sorted indices; purely a cache, results never depend
  // on whether an entry was present.
  mutable std::mutex cache_mutex_;
  mutable std::map<std::vector<std::size_t>, std::shared_ptr<const BatchSums>> cache_;
  mutable std::vector<std::vector<std::size_t>> cache_order_;
};

// F(w) = ½ wᵀ D w with D = diag(spectrum).  Saddle at the origin when the
// spectrum has mixed signs.  One sample.
class IndefiniteQuadratic final : public DifferentiableModel {
 public:
  IndefiniteQuadratic(Vector diagonal, double gamma);
  std::size_t dim() const override { return diag_.size(); }
  std::size_t sample_count() const override { return 1; }
  std::string name() const override { return "indefinite-quadratic"; }
  const Vector& diagonal() const { return diag_; }

 protected:
  double sample_loss(std::span<const double> w, std::size_t i) const override;
  double sample_value_and_gradient(std::span<const double> w, std::size_t i,
                                   std::span<double> grad) const override;
  void sample_hvp(std::span<const double> w, std::size_t i, std::span<const double> v,
                  std::span<double> out) const override;

 private:
  Vector diag_;
};

// F(x, y) = x³ − 3xy².  Degenerate saddle at the origin (zero Hessian); at
// any other point the Hessian has eigenvalues ±6‖(x, y)‖.  One sample.
class MonkeySaddle final : public DifferentiableModel {
 public:
  explicit MonkeySaddle(double gamma) : DifferentiableModel(gamma) {}
  std::size_t dim() const override { return 2; }
  std::size_t sample_count() const override { return 1; }
  std::string name() const override { return "cubic-monkey-saddle"; }

 protected:
  double sample_loss(std::span<const double> w, std::size_t i) const override;
  double sample_value_and_gradient(std::span<const double> w, std::size_t i,
                                   std::span<double> grad) const override;
  void sample_hvp(std::span<const double> w, std::size_t i, std::span<const double> v,
                  std::span<double> out) const override;
};

// kind: "indefinite-quadratic" (uses `spectrum`, default {1, -1}) or
// "cubic-monkey-saddle".
std::unique_ptr<DifferentiableModel> make_saddle_problem(const std::string& kind,
                                                         const Vector& spectrum = {},
                                                         double gamma = 0.0);

}  // namespace snk
