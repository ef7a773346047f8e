#include "snk/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace snk {

void Dataset::validate() const {
  if (samples.empty()) throw ArgumentError("dataset '" + name + "' is empty");
  const std::size_t nx = input_dim();
  const std::size_t ny = target_dim();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    if (s.x.size() != nx || s.y.size() != ny) {
      throw ArgumentError("dataset '" + name + "': sample " + std::to_string(i) +
                          " has inconsistent dimensions");
    }
    if (!all_finite(s.x) || !all_finite(s.y)) {
      throw ArgumentError("dataset '" + name + "': sample " + std::to_string(i) +
                          " has non-finite entries");
    }
  }
}

Batch full_batch(std::size_t n) {
  Batch b;
  b.indices.resize(n);
  std::iota(b.indices.begin(), b.indices.end(), std::size_t{0});
  return b;
}

Batch sample_batch(SeededRng& rng, std::size_t population, std::size_t size, bool replacement) {
  if (size == 0) throw ArgumentError("sample_batch: batch size must be at least 1");
  if (population == 0) throw ArgumentError("sample_batch: empty population");
  Batch b;
  b.indices.reserve(size);
  if (replacement) {
    for (std::size_t k = 0; k < size; ++k) b.indices.push_back(rng.uniform_index(population));
    return b;
  }
  if (size > population) {
    throw ArgumentError("sample_batch: size " + std::to_string(size) +
                        " exceeds population " + std::to_string(population) +
                        " without replacement");
  }
  // Partial Fisher-Yates.
  std::vector<std::size_t> pool(population);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t k = 0; k < size; ++k) {
    const std::size_t j = k + rng.uniform_index(population - k);
    std::swap(pool[k], pool[j]);
    b.indices.push_back(pool[k]);
  }
  return b;
}

Batch sample_batch(SeededRng& rng, const Dataset& dataset, std::size_t size, bool replacement) {
  return sample_batch(rng, dataset.size(), size, replacement);
}

Batch subsample(SeededRng& rng, const Batch& from, std::size_t size) {
  const Batch positions = sample_batch(rng, from.size(), size, false);
  Batch out;
  out.indices.reserve(size);
  for (std::size_t p : positions.indices) out.indices.push_back(from.indices[p]);
  return out;
}

// ---------------------------------------------------------------------------

DifferentiableModel::DifferentiableModel(double gamma) : gamma_(gamma) {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw ArgumentError("regularization gamma must be finite and non-negative");
  }
}

std::vector<std::size_t> DifferentiableModel::checked_sorted(std::span<const double> w,
                                                             const Batch& batch) const {
  if (w.size() != dim()) {
    throw DimensionError("parameter vector has length " + std::to_string(w.size()) +
                         ", model expects " + std::to_string(dim()));
  }
  if (!all_finite(w)) throw NonFiniteLossError("parameter vector has non-finite entries", norm(w));
  if (batch.indices.empty()) throw ArgumentError("empty batch");
  std::vector<std::size_t> sorted = batch.indices;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.back() >= sample_count()) {
    throw ArgumentError("batch index " + std::to_string(sorted.back()) + " out of range (" +
                        std::to_string(sample_count()) + " samples)");
  }
  return sorted;
}

void DifferentiableModel::check_value(double value, std::span<const double> w) const {
  if (!std::isfinite(value)) {
    const double wn = norm(w);
    std::ostringstream os;
    os << name() << ": non-finite loss at |w| = " << wn;
    throw NonFiniteLossError(os.str(), wn);
  }
}

double DifferentiableModel::batch_loss_sum(std::span<const double> w,
                                           std::span<const std::size_t> sorted) const {
  double s = 0.0;
  for (std::size_t i : sorted) s += sample_loss(w, i);
  return s;
}

double DifferentiableModel::batch_value_and_gradient_sum(std::span<const double> w,
                                                         std::span<const std::size_t> sorted,
                                                         std::span<double> grad) const {
  double s = 0.0;
  for (std::size_t i : sorted) s += sample_value_and_gradient(w, i, grad);
  return s;
}

void DifferentiableModel::batch_hvp_sum(std::span<const double> w,
                                        std::span<const std::size_t> sorted,
                                        std::span<const double> v, std::span<double> out) const {
  for (std::size_t i : sorted) sample_hvp(w, i, v, out);
}

double DifferentiableModel::regularized_loss(std::span<const double> w, const Batch& batch) const {
  const auto sorted = checked_sorted(w, batch);
  const double n = static_cast<double>(sorted.size());
  double value = batch_loss_sum(w, sorted) / n;
  if (gamma_ != 0.0) value += 0.5 * gamma_ * dot(w, w);
  check_value(value, w);
  return value;
}

ValueAndGradient DifferentiableModel::regularized_value_and_gradient(std::span<const double> w,
                                                                     const Batch& batch) const {
  const auto sorted = checked_sorted(w, batch);
  const double n = static_cast<double>(sorted.size());
  ValueAndGradient out;
  out.gradient.assign(dim(), 0.0);
  out.value = batch_value_and_gradient_sum(w, sorted, out.gradient) / n;
  scale(1.0 / n, out.gradient);
  if (gamma_ != 0.0) {
    out.value += 0.5 * gamma_ * dot(w, w);
    axpy(gamma_, w, out.gradient);
  }
  check_value(out.value, w);
  if (!all_finite(out.gradient)) {
    throw NonFiniteLossError(name() + ": non-finite gradient", norm(w));
  }
  return out;
}

Vector DifferentiableModel::hvp_impl(std::span<const double> w, const Batch& batch,
                                     std::span<const double> v, bool regularized) const {
  const auto sorted = checked_sorted(w, batch);
  if (v.size() != dim()) throw DimensionError("hvp: direction has wrong length");
  if (!all_finite(v)) throw ArgumentError("hvp: direction has non-finite entries");
  const double n = static_cast<double>(sorted.size());
  Vector out(dim(), 0.0);
  batch_hvp_sum(w, sorted, v, out);
  scale(1.0 / n, out);
  if (regularized && gamma_ != 0.0) axpy(gamma_, v, out);
  if (!all_finite(out)) throw NonFiniteLossError(name() + ": non-finite Hessian-vector product", norm(w));
  ledger_.add_forward(2 * sorted.size());
  ledger_.add_backward(2 * sorted.size());
  return out;
}

double DifferentiableModel::loss(std::span<const double> w, const Batch& batch) const {
  const double value = regularized_loss(w, batch);
  ledger_.add_forward(batch.size());
  return value;
}

Vector DifferentiableModel::gradient(std::span<const double> w, const Batch& batch) const {
  return value_and_gradient(w, batch).gradient;
}

ValueAndGradient DifferentiableModel::value_and_gradient(std::span<const double> w,
                                                         const Batch& batch) const {
  ValueAndGradient out = regularized_value_and_gradient(w, batch);
  ledger_.add_forward(batch.size());
  ledger_.add_backward(batch.size());
  return out;
}

Vector DifferentiableModel::hvp(std::span<const double> w, const Batch& batch,
                                std::span<const double> v) const {
  return hvp_impl(w, batch, v, true);
}

Vector DifferentiableModel::data_hvp(std::span<const double> w, const Batch& batch,
                                     std::span<const double> v) const {
  return hvp_impl(w, batch, v, false);
}

double DifferentiableModel::monitor_loss(std::span<const double> w, const Batch& batch) const {
  return regularized_loss(w, batch);
}

Vector DifferentiableModel::monitor_gradient(std::span<const double> w, const Batch& batch) const {
  return regularized_value_and_gradient(w, batch).gradient;
}

// ---------------------------------------------------------------------------
// Dataset IO

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) {
    if (!field.empty() && field.back() == '\r') field.pop_back();
    out.push_back(field);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Dataset load_dataset_csv(const std::string& path, const std::string& name) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ArgumentError("dataset file is empty: " + path);
  const auto header = split_csv_line(line);
  std::size_t nx = 0;
  std::size_t ny = 0;
  for (const std::string& h : header) {
    if (h.size() < 2 || (h[0] != 'x' && h[0] != 'y')) {
      throw ArgumentError("dataset header field '" + h + "' is not of the form x<i> or y<j>");
    }
    const bool is_x = h[0] == 'x';
    const std::size_t expected = is_x ? nx : ny;
    if (h.substr(1) != std::to_string(expected) || (is_x && ny > 0)) {
      throw ArgumentError("dataset header out of order at field '" + h + "'");
    }
    (is_x ? nx : ny)++;
  }
  if (nx == 0 || ny == 0) throw ArgumentError("dataset header needs at least one x and one y column");

  Dataset ds;
  ds.name = name.empty() ? path : name;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != nx + ny) {
      throw ArgumentError("dataset row " + std::to_string(row) + " has " +
                          std::to_string(fields.size()) + " fields, expected " +
                          std::to_string(nx + ny));
    }
    Sample s;
    s.x.reserve(nx);
    s.y.reserve(ny);
    for (std::size_t j = 0; j < fields.size(); ++j) {
      char* end = nullptr;
      const double v = std::strtod(fields[j].c_str(), &end);
      if (end == fields[j].c_str() || *end != '\0') {
        throw ArgumentError("dataset row " + std::to_string(row) + ": bad number '" +
                            fields[j] + "'");
      }
      (j < nx ? s.x : s.y).push_back(v);
    }
    ds.samples.push_back(std::move(s));
  }
  ds.validate();
  return ds;
}

void save_dataset_csv(const Dataset& dataset, const std::string& path) {
  dataset.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset file: " + path);
  const std::size_t nx = dataset.input_dim();
  const std::size_t ny = dataset.target_dim();
  for (std::size_t j = 0; j < nx; ++j) out << (j ? "," : "") << 'x' << j;
  for (std::size_t j = 0; j < ny; ++j) out << ",y" << j;
  out << '\n';
  for (const Sample& s : dataset.samples) {
    for (std::size_t j = 0; j < nx; ++j) out << (j ? "," : "") << format_real(s.x[j]);
    for (std::size_t j = 0; j < ny; ++j) out << ',' << format_real(s.y[j]);
    out << '\n';
  }
}

Dataset make_gaussian_mixture(SeededRng& rng, const MixtureOptions& options) {
  if (options.samples == 0 || options.dim == 0 || options.clusters == 0 || options.latent_dim == 0) {
    throw ArgumentError("make_gaussian_mixture: sizes must be positive");
  }
  // Latent subspace, then cluster centres inside it.
  const DenseMatrix basis = gaussian_matrix(rng, options.dim, options.latent_dim);
  std::vector<Vector> centres;
  for (std::size_t c = 0; c < options.clusters; ++c) centres.push_back(gaussian_vector(rng, options.latent_dim));
  const double inv_sqrt_latent = 1.0 / std::sqrt(static_cast<double>(options.latent_dim));

  Dataset ds;
  ds.name = "gaussian-mixture";
  ds.samples.reserve(options.samples);
  for (std::size_t i = 0; i < options.samples; ++i) {
    const std::size_t c = rng.uniform_index(options.clusters);
    Vector z = centres[c];
    for (double& zi : z) zi += options.cluster_spread * rng.normal();
    Vector x = basis.multiply(z);
    for (double& xi : x) xi = xi * inv_sqrt_latent + options.noise * rng.normal() + options.offset;
    Sample s;
    s.y = x;
    s.x = std::move(x);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace snk
