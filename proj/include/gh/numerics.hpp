#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace gh {

using Real = double;
using Vector = std::vector<Real>;

/// Dense row-major matrix. Embeddings, predictions and structures are stored
/// column-per-sample, so most callers work with `col(j)` views through `(r, c)`.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, Real fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<Real> data);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  Real& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<Real> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const Real> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  Vector col(std::size_t c) const;
  void set_col(std::size_t c, std::span<const Real> values);

  std::span<Real> data() noexcept { return data_; }
  std::span<const Real> data() const noexcept { return data_; }

  Matrix transpose() const;
  /// Columns listed in `indices`, in that order.
  Matrix gather_cols(std::span<const std::size_t> indices) const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(Real s) noexcept;

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Real s, Matrix a);

Real dot(std::span<const Real> a, std::span<const Real> b);
Real norm2(std::span<const Real> a);
Real column_norm(const Matrix& m, std::size_t c);
/// Largest absolute entry of a − b; shapes must agree.
Real max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(std::span<const Real> values);

/// Seedable generator used by every module. The engine is std::mt19937_64,
/// whose output sequence is fixed by the standard; uniform and normal draws
/// are derived here (53-bit mantissa, Marsaglia polar method) rather than
/// through the implementation-defined <random> distributions, so a seed
/// reproduces the same stream on any conforming toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1).
  Real uniform();
  Real uniform(Real lo, Real hi) { return lo + (hi - lo) * uniform(); }
  Real normal();
  Real normal(Real mean, Real stddev) { return mean + stddev * normal(); }
  /// Uniform integer on [0, n).
  std::size_t below(std::size_t n);
  /// Independent child stream, deterministic in (parent state, salt).
  Rng split(std::uint64_t salt);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  Real spare_ = 0.0;
};

/// Max-shifted softmax of logits / temperature.
Vector softmax(std::span<const Real> logits, Real temperature = 1.0);
Real log_sum_exp(std::span<const Real> values);

/// d×k matrix with orthonormal columns from a Gaussian draw (Householder QR).
Matrix qr_orthonormal(Rng& rng, std::size_t d, std::size_t k);

}  // namespace gh
