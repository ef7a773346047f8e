#include "snk/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

namespace snk {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    std::ostringstream os;
    os << op << ": length mismatch (" << a << " vs " << b << ")";
    throw DimensionError(os.str());
  }
}

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
  require_same_length(a.size(), b.size(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) {
  // Scaled accumulation so that very large or small entries do not overflow.
  double scale_ = 0.0;
  for (double x : a) scale_ = std::max(scale_, std::abs(x));
  if (scale_ == 0.0 || !std::isfinite(scale_)) return scale_;
  double s = 0.0;
  for (double x : a) {
    const double y = x / scale_;
    s += y * y;
  }
  return scale_ * std::sqrt(s);
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require_same_length(x.size(), y.size(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void scale(double alpha, std::span<double> x) {
  for (double& v : x) v *= alpha;
}

Vector add_scaled(std::span<const double> x, double alpha, std::span<const double> y) {
  require_same_length(x.size(), y.size(), "add_scaled");
  Vector out(x.begin(), x.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += alpha * y[i];
  return out;
}

bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

double max_abs(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

// ---------------------------------------------------------------------------
// DenseMatrix

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), data_(std::move(entries)) {
  if (data_.size() != rows * cols) throw DimensionError("DenseMatrix: entries.size() != rows*cols");
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::diagonal(std::span<const double> diag) {
  DenseMatrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

Vector DenseMatrix::column(std::size_t j) const {
  Vector c(rows_);
  for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
  return c;
}

void DenseMatrix::set_column(std::size_t j, std::span<const double> v) {
  require_same_length(v.size(), rows_, "set_column");
  for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = v[i];
}

DenseMatrix DenseMatrix::transpose() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Vector DenseMatrix::multiply(std::span<const double> x) const {
  require_same_length(x.size(), cols_, "DenseMatrix::multiply");
  Vector y(rows_, 0.0);
  for (std::size_t i = 0; i < rows_; ++i) {
    const double* r = data_.data() + i * cols_;
    double s = 0.0;
    for (std::size_t j = 0; j < cols_; ++j) s += r[j] * x[j];
    y[i] = s;
  }
  return y;
}

Vector DenseMatrix::multiply_transposed(std::span<const double> x) const {
  require_same_length(x.size(), rows_, "DenseMatrix::multiply_transposed");
  Vector y(cols_, 0.0);
  for (std::size_t i = 0; i < rows_; ++i) {
    const double* r = data_.data() + i * cols_;
    for (std::size_t j = 0; j < cols_; ++j) y[j] += r[j] * x[i];
  }
  return y;
}

double DenseMatrix::max_abs() const { return snk::max_abs(data_); }

bool DenseMatrix::is_symmetric(double rel_tol) const {
  if (rows_ != cols_) return false;
  const double tol = rel_tol * max_abs();
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = i + 1; j < cols_; ++j)
      if (std::abs((*this)(i, j) - (*this)(j, i)) > tol) return false;
  return true;
}

DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_length(a.cols(), b.rows(), "matrix product");
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

DenseMatrix operator-(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("matrix difference: shape mismatch");
  DenseMatrix c = a;
  auto ce = c.entries();
  auto be = b.entries();
  for (std::size_t i = 0; i < ce.size(); ++i) ce[i] -= be[i];
  return c;
}

DenseMatrix operator+(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("matrix sum: shape mismatch");
  DenseMatrix c = a;
  auto ce = c.entries();
  auto be = b.entries();
  for (std::size_t i = 0; i < ce.size(); ++i) ce[i] += be[i];
  return c;
}

double symmetric_spectral_norm(const DenseMatrix& a) {
  const SymEig e = sym_eig(a);
  return e.values.empty() ? 0.0 : std::abs(e.values.front());
}

// ---------------------------------------------------------------------------
// thin QR

DenseMatrix thin_qr(const DenseMatrix& a) {
  const std::size_t d = a.rows();
  const std::size_t k = a.cols();
  if (k > d) throw DimensionError("thin_qr: more columns than rows");
  DenseMatrix q(d, k);
  std::vector<Vector> basis;
  basis.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    Vector v = a.column(j);
    const double original = norm(v);
    for (int pass = 0; pass < 2; ++pass) {
      for (const Vector& b : basis) axpy(-dot(b, v), b, v);
    }
    const double n = norm(v);
    if (!(original > 0.0) || n < 1e-14 * original || n < 1e-300) {
      std::ostringstream os;
      os << "thin_qr: column " << j << " is numerically dependent (residual norm " << n
         << ", original norm " << original << ")";
      throw DegenerateSketchError(os.str());
    }
    scale(1.0 / n, v);
    q.set_column(j, v);
    basis.push_back(std::move(v));
  }
  return q;
}

// ---------------------------------------------------------------------------
// symmetric eigendecomposition (cyclic Jacobi)

SymEig sym_eig(const DenseMatrix& input) {
  const std::size_t n = input.rows();
  if (input.cols() != n) throw ContractError("sym_eig: matrix is not square");
  if (!all_finite(input.entries())) throw NumericalError("sym_eig: non-finite entries");
  if (!input.is_symmetric(1e-12)) throw ContractError("sym_eig: matrix is not symmetric");

  DenseMatrix a = input;
  // Exact symmetrization; the check above bounds what this discards.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double m = 0.5 * (a(i, j) + a(j, i));
      a(i, j) = m;
      a(j, i) = m;
    }
  DenseMatrix v = DenseMatrix::identity(n);

  const double scale_ = std::max(a.max_abs(), 1e-300);
  constexpr int kMaxSweeps = 100;
  int sweep = 0;
  double off = 0.0;
  for (; sweep < kMaxSweeps; ++sweep) {
    off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) <= 1e-15 * scale_ * static_cast<double>(n)) break;

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = std::abs(theta) > 1e150
                             ? 0.5 / theta
                             : std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (sweep == kMaxSweeps) {
    std::ostringstream os;
    os << "sym_eig: Jacobi did not converge after " << kMaxSweeps << " sweeps (n=" << n
       << ", off-diagonal norm " << std::sqrt(off) << ", scale " << scale_ << ")";
    throw NumericalError(os.str());
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    const double ai = std::abs(a(i, i));
    const double aj = std::abs(a(j, j));
    if (ai != aj) return ai > aj;
    return a(i, i) > a(j, j);  // positive first; stable sort keeps index order after that
  });

  SymEig out;
  out.values.resize(n);
  out.vectors = DenseMatrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = a(order[j], order[j]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// RNG

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t st = seed;
  for (auto& s : s_) s = splitmix64(st);
}

std::uint64_t SeededRng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double SeededRng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t SeededRng::uniform_index(std::uint64_t n) {
  if (n == 0) throw ArgumentError("uniform_index: empty range");
  // Lemire's nearly-divisionless rejection method.
  unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      m = static_cast<unsigned __int128>(next_u64()) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double SeededRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * M_PI * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

SeededRng SeededRng::derive(std::uint64_t stream) const {
  std::uint64_t st = seed_ ^ (0xd1b54a32d192ed03ULL * (stream + 1));
  return SeededRng(splitmix64(st));
}

DenseMatrix gaussian_matrix(SeededRng& rng, std::size_t d, std::size_t k) {
  DenseMatrix m(d, k);
  for (double& x : m.entries()) x = rng.normal();
  return m;
}

Vector gaussian_vector(SeededRng& rng, std::size_t d) {
  Vector v(d);
  for (double& x : v) x = rng.normal();
  return v;
}

Vector random_unit_vector(SeededRng& rng, std::size_t d) {
  Vector v = gaussian_vector(rng, d);
  const double n = norm(v);
  scale(1.0 / n, v);
  return v;
}

}  // namespace snk
