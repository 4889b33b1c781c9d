#include "gh/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gh/error.hpp"

namespace gh {

Matrix::Matrix(std::size_t rows, std::size_t cols, Real fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<Real> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw Error(Errc::invalid_argument, "matrix data length " + std::to_string(data_.size()) +
                                            " does not match " + std::to_string(rows) + "x" +
                                            std::to_string(cols));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Vector Matrix::col(std::size_t c) const {
  Vector out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

void Matrix::set_col(std::size_t c, std::span<const Real> values) {
  for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = values[r];
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix Matrix::gather_cols(std::span<const std::size_t> indices) const {
  Matrix out(rows_, indices.size());
  for (std::size_t r = 0; r < rows_; ++r) {
    auto src = row(r);
    auto dst = out.row(r);
    for (std::size_t j = 0; j < indices.size(); ++j) dst[j] = src[indices[j]];
  }
  return out;
}

namespace {
void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(Errc::invalid_argument,
                std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                    std::to_string(b.cols()));
  }
}
}  // namespace

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_shape(*this, other, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(Real s) noexcept {
  for (auto& x : data_) x *= s;
  return *this;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw Error(Errc::invalid_argument, "matmul: inner dimensions " + std::to_string(a.cols()) +
                                            " and " + std::to_string(b.rows()) + " differ");
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const Real aik = a(i, k);
      if (aik == 0.0) continue;
      auto src = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += aik * src[j];
    }
  }
  return out;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Real s, Matrix a) { return a *= s; }

Real dot(std::span<const Real> a, std::span<const Real> b) {
  Real s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Real norm2(std::span<const Real> a) { return std::sqrt(dot(a, a)); }

Real column_norm(const Matrix& m, std::size_t c) {
  Real s = 0.0;
  for (std::size_t r = 0; r < m.rows(); ++r) s += m(r, c) * m(r, c);
  return std::sqrt(s);
}

Real max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  Real m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

bool all_finite(std::span<const Real> values) {
  return std::all_of(values.begin(), values.end(), [](Real v) { return std::isfinite(v); });
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

Real Rng::uniform() {
  return static_cast<Real>(engine_() >> 11) * 0x1.0p-53;
}

Real Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  Real u = 0.0, v = 0.0, s = 0.0;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const Real f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw Error(Errc::invalid_argument, "Rng::below: empty range");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = 0;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

Rng Rng::split(std::uint64_t salt) {
  // splitmix64 finalizer over a fresh draw and the salt
  std::uint64_t z = engine_() + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return Rng(z ^ (z >> 31));
}

Vector softmax(std::span<const Real> logits, Real temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(Errc::invalid_argument, "softmax: temperature must be positive and finite");
  }
  if (logits.empty()) throw Error(Errc::invalid_argument, "softmax: empty input");
  if (!all_finite(logits)) throw Error(Errc::invalid_argument, "softmax: non-finite logit");
  const Real mx = *std::max_element(logits.begin(), logits.end());
  Vector out(logits.size());
  Real sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - mx) / temperature);
    sum += out[i];
  }
  for (auto& p : out) p /= sum;
  return out;
}

Real log_sum_exp(std::span<const Real> values) {
  if (values.empty()) throw Error(Errc::invalid_argument, "log_sum_exp: empty input");
  const Real mx = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(mx)) return mx;
  Real sum = 0.0;
  for (Real v : values) sum += std::exp(v - mx);
  return mx + std::log(sum);
}

Matrix qr_orthonormal(Rng& rng, std::size_t d, std::size_t k) {
  if (d < k) {
    throw Error(Errc::invalid_argument, "qr_orthonormal: need d >= k, got d=" + std::to_string(d) +
                                            " k=" + std::to_string(k));
  }
  Matrix a(d, k);
  for (auto& x : a.data()) x = rng.normal();

  // Householder reflectors stored column by column; a becomes R above the diagonal.
  std::vector<Vector> reflectors;
  reflectors.reserve(k);
  Vector diag_sign(k, 1.0);
  for (std::size_t j = 0; j < k; ++j) {
    Vector v(d - j);
    for (std::size_t i = j; i < d; ++i) v[i - j] = a(i, j);
    const Real alpha = norm2(v);
    const Real sign = v[0] >= 0.0 ? 1.0 : -1.0;
    v[0] += sign * alpha;
    const Real vnorm = norm2(v);
    if (vnorm > 0.0) {
      for (auto& x : v) x /= vnorm;
      for (std::size_t c = j; c < k; ++c) {
        Real s = 0.0;
        for (std::size_t i = j; i < d; ++i) s += v[i - j] * a(i, c);
        for (std::size_t i = j; i < d; ++i) a(i, c) -= 2.0 * s * v[i - j];
      }
    }
    diag_sign[j] = a(j, j) >= 0.0 ? 1.0 : -1.0;
    reflectors.push_back(std::move(v));
  }

  // Q = H_0 H_1 ... H_{k-1} applied to the first k columns of the identity.
  Matrix q(d, k);
  for (std::size_t c = 0; c < k; ++c) q(c, c) = 1.0;
  for (std::size_t jj = k; jj-- > 0;) {
    const Vector& v = reflectors[jj];
    for (std::size_t c = 0; c < k; ++c) {
      Real s = 0.0;
      for (std::size_t i = jj; i < d; ++i) s += v[i - jj] * q(i, c);
      for (std::size_t i = jj; i < d; ++i) q(i, c) -= 2.0 * s * v[i - jj];
    }
  }
  // Fix signs so that R has a positive diagonal (Haar-distributed Q).
  for (std::size_t c = 0; c < k; ++c)
    if (diag_sign[c] < 0.0)
      for (std::size_t i = 0; i < d; ++i) q(i, c) = -q(i, c);
  return q;
}

}  // namespace gh
