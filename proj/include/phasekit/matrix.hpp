#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <random>
#include <string>
#include <vector>

#include "phasekit/errors.hpp"

namespace phasekit {

/// Dense row-major matrix of doubles. The one value type every other module
/// is built on; vectors are 1xC or Tx1 matrices.
class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
    std::size_t r = 0;
    for (const auto& row : rows) {
      if (row.size() != m.cols_) throw ShapeError("from_rows: ragged initializer");
      std::size_t c = 0;
      for (double v : row) m(r, c++) = v;
      ++r;
    }
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
  const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shapes " + a.shape_str() + " and " +
                     b.shape_str() + " differ");
}

/// Standard matrix product (i-k-j loop order; every output element accumulates
/// over k in ascending order, which downstream bit-exactness tests rely on).
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + a.shape_str() + " incompatible with " + b.shape_str());
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* crow = c.row_ptr(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const double* brow = b.row_ptr(k);
      for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

inline Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
  return t;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix c = a;
  for (std::size_t i = 0; i < b.size(); ++i) c.data()[i] += b.data()[i];
  return c;
}

inline Matrix sub(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "sub");
  Matrix c = a;
  for (std::size_t i = 0; i < b.size(); ++i) c.data()[i] -= b.data()[i];
  return c;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix c = a;
  for (std::size_t i = 0; i < b.size(); ++i) c.data()[i] *= b.data()[i];
  return c;
}

inline Matrix scale(const Matrix& a, double s) {
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] *= s;
  return c;
}

/// Adds a 1xC row vector to every row of a.
inline Matrix add_rowvec(const Matrix& a, const Matrix& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw ShapeError("add_rowvec: " + row.shape_str() + " does not broadcast over " +
                     a.shape_str());
  Matrix c = a;
  for (std::size_t r = 0; r < c.rows(); ++r)
    for (std::size_t j = 0; j < c.cols(); ++j) c(r, j) += row(0, j);
  return c;
}

/// Row-wise softmax with per-row max subtraction for stability.
inline Matrix softmax_rows(const Matrix& m) {
  if (m.empty()) throw ShapeError("softmax_rows: empty input");
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double* in = m.row_ptr(r);
    double* o = out.row_ptr(r);
    double mx = in[0];
    for (std::size_t j = 1; j < m.cols(); ++j) mx = std::max(mx, in[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (std::size_t j = 0; j < m.cols(); ++j) o[j] /= sum;
  }
  return out;
}

/// Row-wise layer normalization: standardize each row (population variance),
/// then scale by gain and shift by bias (both 1xC).
inline Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias,
                         double eps = 1e-5) {
  if (gain.rows() != 1 || gain.cols() != x.cols() || bias.rows() != 1 ||
      bias.cols() != x.cols())
    throw ShapeError("layer_norm: gain " + gain.shape_str() + " / bias " +
                     bias.shape_str() + " do not match input " + x.shape_str());
  if (eps <= 0.0) throw ConfigError("layer_norm: eps must be positive");
  Matrix out(x.rows(), x.cols());
  const std::size_t c = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double* in = x.row_ptr(r);
    double* o = out.row_ptr(r);
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += in[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = in[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j)
      o[j] = (in[j] - mean) * inv * gain(0, j) + bias(0, j);
  }
  return out;
}

inline Matrix relu(const Matrix& x) {
  Matrix out = x;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out.data()[i] < 0.0) out.data()[i] = 0.0;
  return out;
}

inline Matrix tanh_map(const Matrix& x) {
  Matrix out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::tanh(out.data()[i]);
  return out;
}

inline Matrix concat_cols(const std::vector<Matrix>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != parts.front().rows())
      throw ShapeError("concat_cols: row counts differ (" + p.shape_str() + " vs " +
                       parts.front().shape_str() + ")");
    cols += p.cols();
  }
  Matrix out(parts.front().rows(), cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t r = 0; r < p.rows(); ++r)
      for (std::size_t j = 0; j < p.cols(); ++j) out(r, off + j) = p(r, j);
    off += p.cols();
  }
  return out;
}

inline Matrix concat_rows(const std::vector<Matrix>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != parts.front().cols())
      throw ShapeError("concat_rows: column counts differ (" + p.shape_str() + " vs " +
                       parts.front().shape_str() + ")");
    rows += p.rows();
  }
  Matrix out(rows, parts.front().cols());
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::memcpy(out.row_ptr(off), p.data(), p.size() * sizeof(double));
    off += p.rows();
  }
  return out;
}

inline Matrix slice_rows(const Matrix& m, std::size_t first, std::size_t count) {
  if (first + count > m.rows())
    throw IndexError("slice_rows: [" + std::to_string(first) + ", " +
                     std::to_string(first + count) + ") outside " + m.shape_str());
  Matrix out(count, m.cols());
  std::memcpy(out.data(), m.row_ptr(first), count * m.cols() * sizeof(double));
  return out;
}

inline Matrix row(const Matrix& m, std::size_t r) { return slice_rows(m, r, 1); }

inline std::size_t argmax_row(const Matrix& m, std::size_t r) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < m.cols(); ++j)
    if (m(r, j) > m(r, best)) best = j;
  return best;
}

// ---------------------------------------------------------------------------
// Deterministic random numbers and parameter initialization.
// ---------------------------------------------------------------------------

struct RngSeed {
  std::uint64_t value = 1;
};

/// Deterministic RNG: mt19937_64 plus hand-rolled value mappings, so identical
/// seeds and call sequences produce bit-identical draws on every platform
/// (standard distributions are implementation-defined and are avoided).
class Rng {
 public:
  explicit Rng(RngSeed seed) : gen_(seed.value) {}
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (pairs cached).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  /// Uniform integer in [lo, hi] (inclusive), rejection-free modulo bias is
  /// irrelevant at the ranges used here.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(gen_() % span);
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

enum class InitScheme { uniform_scaled, zeros, ones };

inline InitScheme init_scheme_from_string(const std::string& s) {
  if (s == "uniform-scaled") return InitScheme::uniform_scaled;
  if (s == "zeros") return InitScheme::zeros;
  if (s == "ones") return InitScheme::ones;
  throw ConfigError("unknown init scheme: " + s);
}

/// Deterministic parameter initialization. uniform_scaled draws from
/// U(-1/sqrt(fan_in), +1/sqrt(fan_in)) with fan_in = cols.
inline Matrix init_params(std::size_t rows, std::size_t cols, InitScheme scheme, Rng& rng) {
  Matrix m(rows, cols);
  switch (scheme) {
    case InitScheme::zeros:
      return m;
    case InitScheme::ones:
      for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = 1.0;
      return m;
    case InitScheme::uniform_scaled: {
      const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
      for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
      return m;
    }
  }
  throw ConfigError("unknown init scheme");
}

}  // namespace phasekit
