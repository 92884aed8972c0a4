#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

namespace pct {

using Vector = std::vector<double>;

/// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() & noexcept { return data_; }
  const std::vector<double>& data() const& noexcept { return data_; }
  std::vector<double> data() && noexcept { return std::move(data_); }

  Matrix transposed() const;
  /// Rows selected by index, in the given order.
  Matrix select_rows(std::span<const std::size_t> indices) const;

  bool all_finite() const noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// a * b with row-major accumulation; throws std::invalid_argument on shape mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

/// a * b^T, same accumulation order as matmul(a, b.transposed()).
Matrix matmul_transposed(const Matrix& a, const Matrix& b);

/// a^T * b.
Matrix transposed_matmul(const Matrix& a, const Matrix& b);

void add_inplace(Matrix& dst, const Matrix& src, double scale = 1.0);

/// Row-wise softmax with per-row max subtraction.
Matrix softmax_rows(const Matrix& logits);

/// Row-wise log-softmax; finite for all finite inputs.
Matrix log_softmax_rows(const Matrix& logits);

/// log(sum(exp(x))) with max subtraction. Entries of -inf are allowed.
double log_sum_exp(std::span<const double> x);

/// xoshiro256** seeded through splitmix64. Normal draws use the polar
/// Box-Muller transform and cache the second variate.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Fisher-Yates shuffle driven by uniform_index.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Draws n samples x = mean + L z with L the Cholesky factor of cov.
/// Throws std::invalid_argument when cov is not symmetric positive-definite.
Matrix gaussian_sample(Rng& rng, std::span<const double> mean, const Matrix& cov, std::size_t n);

/// Lower-triangular Cholesky factor; throws std::invalid_argument if not SPD.
Matrix cholesky(const Matrix& spd);

using ScalarFn = std::function<double(std::span<const double>)>;

/// Central differences (f(p + h e_i) - f(p - h e_i)) / 2h.
Vector finite_diff_grad(const ScalarFn& loss, std::span<const double> params, double h = 1e-5);

/// ||a - b||_2 / max(||a||_2 + ||b||_2, tiny). Zero when both are zero.
double relative_error(std::span<const double> a, std::span<const double> b);

}  // namespace pct
