#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "snk/error.hpp"

namespace snk {

// Flat vector of optimization variables (or any vector in R^d).
using Vector = std::vector<double>;

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
// y <- y + alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void scale(double alpha, std::span<double> x);
Vector add_scaled(std::span<const double> x, double alpha, std::span<const double> y);
bool all_finite(std::span<const double> x);
double max_abs(std::span<const double> x);

// Dense row-major matrix.  Only ever used for small objects: sketches of size
// d x (r+p), projected (r+p) x (r+p) matrices and test oracles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> entries);

  static DenseMatrix identity(std::size_t n);
  static DenseMatrix diagonal(std::span<const double> diag);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<const double> entries() const { return data_; }
  std::span<double> entries() { return data_; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  Vector column(std::size_t j) const;
  void set_column(std::size_t j, std::span<const double> v);

  DenseMatrix transpose() const;
  Vector multiply(std::span<const double> x) const;             // A x
  Vector multiply_transposed(std::span<const double> x) const;  // A^T x
  double max_abs() const;
  bool is_symmetric(double rel_tol = 1e-12) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix operator-(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix operator+(const DenseMatrix& a, const DenseMatrix& b);

// Largest singular value of a symmetric matrix (= max |eigenvalue|).
double symmetric_spectral_norm(const DenseMatrix& a);

// Orthonormal basis Q (d x k) of the column span of A via modified Gram-Schmidt
// with one reorthogonalization pass.  Throws DegenerateSketchError when a
// column collapses below 1e-14 (relative to its original norm).
DenseMatrix thin_qr(const DenseMatrix& a);

struct SymEig {
  Vector values;        // sorted by descending |value|; ties put positive first
  DenseMatrix vectors;  // column j pairs with values[j]
};

// Cyclic Jacobi eigendecomposition of a small symmetric matrix.
SymEig sym_eig(const DenseMatrix& a);

// xoshiro256** seeded through splitmix64.  Normals use the Box-Muller
// transform, so a given seed yields the same stream on every platform with an
// IEEE-754 libm.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64();
  double uniform();                               // [0, 1)
  std::uint64_t uniform_index(std::uint64_t n);   // [0, n), unbiased
  double normal();
  // Independent generator derived from this one's seed and a stream id.
  SeededRng derive(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

DenseMatrix gaussian_matrix(SeededRng& rng, std::size_t d, std::size_t k);
Vector gaussian_vector(SeededRng& rng, std::size_t d);
Vector random_unit_vector(SeededRng& rng, std::size_t d);

}  // namespace snk
