#include "snk/autoencoder.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace snk {

namespace {

double tanh_f(double x) { return std::tanh(x); }
double tanh_df(double x) {
  const double t = std::tanh(x);
  return 1.0 - t * t;
}
double tanh_d2f(double x) {
  const double t = std::tanh(x);
  return -2.0 * t * (1.0 - t * t);
}

double sigmoid_f(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
double sigmoid_df(double x) {
  const double s = sigmoid_f(x);
  return s * (1.0 - s);
}
double sigmoid_d2f(double x) {
  const double s = sigmoid_f(x);
  return s * (1.0 - s) * (1.0 - 2.0 * s);
}

double softplus_f(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double identity_f(double x) { return x; }
double identity_df(double) { return 1.0; }
double identity_d2f(double) { return 0.0; }

}  // namespace

Activation activation_by_name(const std::string& name) {
  if (name == "tanh") return {name, tanh_f, tanh_df, tanh_d2f};
  if (name == "sigmoid") return {name, sigmoid_f, sigmoid_df, sigmoid_d2f};
  if (name == "softplus") return {name, softplus_f, sigmoid_f, sigmoid_df};
  if (name == "identity") return {name, identity_f, identity_df, identity_d2f};
  throw ArgumentError("unknown activation '" + name + "' (expected tanh, sigmoid, softplus or identity)");
}

std::size_t FeedforwardAutoencoder::parameter_count(const std::vector<std::size_t>& widths) {
  std::size_t d = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) d += widths[l] * widths[l + 1] + widths[l + 1];
  return d;
}

FeedforwardAutoencoder::FeedforwardAutoencoder(std::vector<std::size_t> widths,
                                               std::shared_ptr<const Dataset> data, double gamma,
                                               const std::string& activation)
    : DifferentiableModel(gamma),
      widths_(std::move(widths)),
      dim_(0),
      data_(std::move(data)),
      act_(activation_by_name(activation)) {
  if (widths_.size() < 2) throw ArgumentError("autoencoder needs at least two layer widths");
  for (std::size_t n : widths_) {
    if (n == 0) throw ArgumentError("autoencoder layer widths must be positive");
  }
  if (!data_) throw ArgumentError("autoencoder needs a dataset");
  data_->validate();
  if (data_->input_dim() != widths_.front() || data_->target_dim() != widths_.back()) {
    throw DimensionError("dataset dimensions (" + std::to_string(data_->input_dim()) + " -> " +
                         std::to_string(data_->target_dim()) +
                         ") do not match the network's input/output widths");
  }
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    offsets_.push_back(dim_);
    dim_ += widths_[l] * widths_[l + 1] + widths_[l + 1];
  }
}

std::string FeedforwardAutoencoder::name() const {
  std::string s = "autoencoder[";
  for (std::size_t l = 0; l < widths_.size(); ++l) s += (l ? "," : "") + std::to_string(widths_[l]);
  return s + "]/" + act_.name;
}

void FeedforwardAutoencoder::forward(std::span<const double> w, std::span<const double> x,
                                     Tape& tape) const {
  const std::size_t layers = widths_.size() - 1;
  tape.a.resize(layers + 1);
  tape.z.resize(layers);
  tape.a[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = widths_[l];
    const std::size_t out = widths_[l + 1];
    const double* W = w.data() + offsets_[l];
    const double* b = W + in * out;
    const Vector& a = tape.a[l];
    Vector& z = tape.z[l];
    z.resize(out);
    for (std::size_t i = 0; i < out; ++i) {
      double s = b[i];
      const double* Wi = W + i * in;
      for (std::size_t j = 0; j < in; ++j) s += Wi[j] * a[j];
      z[i] = s;
    }
    Vector& next = tape.a[l + 1];
    next.resize(out);
    if (is_output(l)) {
      next = z;
    } else {
      for (std::size_t i = 0; i < out; ++i) next[i] = act_.f(z[i]);
    }
  }
}

Vector FeedforwardAutoencoder::predict(std::span<const double> w, std::span<const double> x) const {
  if (w.size() != dim_) throw DimensionError("predict: parameter vector has wrong length");
  if (x.size() != widths_.front()) throw DimensionError("predict: input has wrong length");
  Tape tape;
  forward(w, x, tape);
  return tape.a.back();
}

double FeedforwardAutoencoder::sample_loss(std::span<const double> w, std::size_t i) const {
  const Sample& s = data_->samples[i];
  Tape tape;
  forward(w, s.x, tape);
  double r = 0.0;
  for (std::size_t k = 0; k < s.y.size(); ++k) {
    const double e = tape.a.back()[k] - s.y[k];
    r += e * e;
  }
  return 0.5 * r;
}

double FeedforwardAutoencoder::sample_value_and_gradient(std::span<const double> w, std::size_t i,
                                                         std::span<double> grad) const {
  const Sample& s = data_->samples[i];
  Tape tape;
  forward(w, s.x, tape);
  const std::size_t layers = widths_.size() - 1;

  Vector delta(widths_.back());
  double value = 0.0;
  for (std::size_t k = 0; k < delta.size(); ++k) {
    delta[k] = tape.a.back()[k] - s.y[k];
    value += delta[k] * delta[k];
  }
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = widths_[l];
    const std::size_t out = widths_[l + 1];
    const double* W = w.data() + offsets_[l];
    double* gW = grad.data() + offsets_[l];
    double* gb = gW + in * out;
    const Vector& a = tape.a[l];
    for (std::size_t r = 0; r < out; ++r) {
      double* gWr = gW + r * in;
      for (std::size_t c = 0; c < in; ++c) gWr[c] += delta[r] * a[c];
      gb[r] += delta[r];
    }
    if (l == 0) break;
    Vector prev(in, 0.0);
    for (std::size_t r = 0; r < out; ++r) {
      const double* Wr = W + r * in;
      for (std::size_t c = 0; c < in; ++c) prev[c] += Wr[c] * delta[r];
    }
    const Vector& zp = tape.z[l - 1];
    for (std::size_t c = 0; c < in; ++c) prev[c] *= act_.df(zp[c]);
    delta = std::move(prev);
  }
  return 0.5 * value;
}

// Pearlmutter's R-operator applied to the forward and backward passes.
void FeedforwardAutoencoder::sample_hvp(std::span<const double> w, std::size_t i,
                                        std::span<const double> v, std::span<double> out) const {
  const Sample& s = data_->samples[i];
  Tape tape;
  forward(w, s.x, tape);
  const std::size_t layers = widths_.size() - 1;

  // Forward R-pass: Ra[l] = R{a_l}, Rz[l] = R{z_l}.
  std::vector<Vector> Ra(layers + 1);
  std::vector<Vector> Rz(layers);
  Ra[0].assign(widths_[0], 0.0);
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = widths_[l];
    const std::size_t n_out = widths_[l + 1];
    const double* W = w.data() + offsets_[l];
    const double* V = v.data() + offsets_[l];
    const double* Vb = V + in * n_out;
    Rz[l].resize(n_out);
    for (std::size_t r = 0; r < n_out; ++r) {
      double acc = Vb[r];
      const double* Wr = W + r * in;
      const double* Vr = V + r * in;
      for (std::size_t c = 0; c < in; ++c) acc += Vr[c] * tape.a[l][c] + Wr[c] * Ra[l][c];
      Rz[l][r] = acc;
    }
    Ra[l + 1].resize(n_out);
    for (std::size_t r = 0; r < n_out; ++r) {
      Ra[l + 1][r] = is_output(l) ? Rz[l][r] : act_.df(tape.z[l][r]) * Rz[l][r];
    }
  }

  // Backward pass and its R-pass together.
  Vector delta(widths_.back());
  for (std::size_t k = 0; k < delta.size(); ++k) delta[k] = tape.a.back()[k] - s.y[k];
  Vector Rdelta = Ra.back();
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = widths_[l];
    const std::size_t n_out = widths_[l + 1];
    const double* W = w.data() + offsets_[l];
    const double* V = v.data() + offsets_[l];
    double* oW = out.data() + offsets_[l];
    double* ob = oW + in * n_out;
    const Vector& a = tape.a[l];
    const Vector& Ral = Ra[l];
    for (std::size_t r = 0; r < n_out; ++r) {
      double* oWr = oW + r * in;
      for (std::size_t c = 0; c < in; ++c) oWr[c] += Rdelta[r] * a[c] + delta[r] * Ral[c];
      ob[r] += Rdelta[r];
    }
    if (l == 0) break;
    Vector back(in, 0.0);   // Wᵀ delta
    Vector Rback(in, 0.0);  // Vᵀ delta + Wᵀ Rdelta
    for (std::size_t r = 0; r < n_out; ++r) {
      const double* Wr = W + r * in;
      const double* Vr = V + r * in;
      for (std::size_t c = 0; c < in; ++c) {
        back[c] += Wr[c] * delta[r];
        Rback[c] += Vr[c] * delta[r] + Wr[c] * Rdelta[r];
      }
    }
    const Vector& zp = tape.z[l - 1];
    const Vector& Rzp = Rz[l - 1];
    Vector next(in);
    Vector Rnext(in);
    for (std::size_t c = 0; c < in; ++c) {
      const double d1 = act_.df(zp[c]);
      next[c] = d1 * back[c];
      Rnext[c] = act_.d2f(zp[c]) * Rzp[c] * back[c] + d1 * Rback[c];
    }
    delta = std::move(next);
    Rdelta = std::move(Rnext);
  }
}

// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  if (checkpoint.widths.size() >= 2 &&
      FeedforwardAutoencoder::parameter_count(checkpoint.widths) != checkpoint.weights.size()) {
    throw DimensionError("checkpoint weight count does not match layer widths");
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out << "w\n";
  char buf[40];
  for (double x : checkpoint.weights) {
    std::snprintf(buf, sizeof buf, "%.17g", x);
    out << buf << '\n';
  }
  nlohmann::json meta;
  meta["widths"] = checkpoint.widths;
  meta["activation"] = checkpoint.activation;
  meta["seed"] = checkpoint.seed;
  meta["dim"] = checkpoint.weights.size();
  std::ofstream side(path + ".json");
  if (!side) throw IoError("cannot write checkpoint sidecar: " + path + ".json");
  side << meta.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::ifstream side(path + ".json");
  if (!side) throw ArgumentError("checkpoint sidecar missing: " + path + ".json");
  Checkpoint cp;
  try {
    const nlohmann::json meta = nlohmann::json::parse(side);
    cp.widths = meta.at("widths").get<std::vector<std::size_t>>();
    cp.activation = meta.at("activation").get<std::string>();
    cp.seed = meta.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError("malformed checkpoint sidecar " + path + ".json: " + e.what());
  }
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    char* end = nullptr;
    const double x = std::strtod(line.c_str(), &end);
    if (end == line.c_str()) throw ArgumentError("bad weight '" + line + "' in " + path);
    cp.weights.push_back(x);
  }
  if (cp.widths.size() >= 2 &&
      FeedforwardAutoencoder::parameter_count(cp.widths) != cp.weights.size()) {
    throw DimensionError("checkpoint " + path + " has " + std::to_string(cp.weights.size()) +
                         " weights, widths imply " +
                         std::to_string(FeedforwardAutoencoder::parameter_count(cp.widths)));
  }
  return cp;
}

}  // namespace snk
