#pragma once

#include <memory>
#include <string>
#include <vector>

#include "snk/model.hpp"

namespace snk {

// Smooth scalar activation with its first two derivatives.
struct Activation {
  std::string name;
  double (*f)(double);
  double (*df)(double);
  double (*d2f)(double);
};

// Known names: tanh, softplus, sigmoid, identity.
Activation activation_by_name(const std::string& name);

// Dense feedforward network trained on ½‖net(x) − y‖².  Hidden layers use the
// activation; the output layer is affine.
//
// Parameter layout, layer by layer: the out×in weight matrix row-major, then
// the out-vector of biases.  d = Σ (in·out + out).
class FeedforwardAutoencoder final : public DifferentiableModel {
 public:
  FeedforwardAutoencoder(std::vector<std::size_t> widths, std::shared_ptr<const Dataset> data,
                         double gamma, const std::string& activation = "tanh");

  std::size_t dim() const override { return dim_; }
  std::size_t sample_count() const override { return data_->size(); }
  std::string name() const override;

  const std::vector<std::size_t>& widths() const { return widths_; }
  const Activation& activation() const { return act_; }
  const Dataset& dataset() const { return *data_; }

  // Network output for one input, no metering.
  Vector predict(std::span<const double> w, std::span<const double> x) const;

  static std::size_t parameter_count(const std::vector<std::size_t>& widths);

 protected:
  double sample_loss(std::span<const double> w, std::size_t i) const override;
  double sample_value_and_gradient(std::span<const double> w, std::size_t i,
                                   std::span<double> grad) const override;
  void sample_hvp(std::span<const double> w, std::size_t i, std::span<const double> v,
                  std::span<double> out) const override;

 private:
  struct Tape {
    std::vector<Vector> a;  // a[0] = x, a[l+1] = layer l output
    std::vector<Vector> z;  // pre-activations
  };
  void forward(std::span<const double> w, std::span<const double> x, Tape& tape) const;
  bool is_output(std::size_t layer) const { return layer + 1 == widths_.size() - 1; }

  std::vector<std::size_t> widths_;
  std::vector<std::size_t> offsets_;  // start of each layer's block in w
  std::size_t dim_;
  std::shared_ptr<const Dataset> data_;
  Activation act_;
};

// Flat weight vector as one-column CSV plus `<path>.json` with the layer
// widths, activation name and seed.
struct Checkpoint {
  Vector weights;
  std::vector<std::size_t> widths;
  std::string activation;
  std::uint64_t seed = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace snk
