#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "kdlab/rng.hpp"

namespace kdlab {

/// Dense row-major matrix of doubles.
class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// A point on the probability simplex: non-negative entries summing to one.
class ProbVector {
public:
  static constexpr double kSumTolerance = 1e-9;

  /// Validates the simplex invariants; throws std::invalid_argument otherwise.
  explicit ProbVector(std::vector<double> values);

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const { return values_; }

  /// True when every entry is >= 0 and the sum is within kSumTolerance of 1.
  static bool is_valid(std::span<const double> values);

private:
  struct Unchecked {};
  ProbVector(std::vector<double> values, Unchecked) : values_(std::move(values)) {}
  friend ProbVector softmax(std::span<const double> logits);

  std::vector<double> values_;
};

/// Standard product; each output is summed left to right over the inner index.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

/// max(v) + log(sum(exp(v - max(v)))). Throws on empty input.
double log_sum_exp(std::span<const double> v);

ProbVector softmax(std::span<const double> logits);

/// Softmax of `logits` written into `out` (same length). No allocation.
void softmax_into(std::span<const double> logits, std::span<double> out);

/// Row-wise softmax.
Matrix softmax_rows(const Matrix& logits);

/// I.i.d. N(mean, std^2) entries, filled in row-major order.
Matrix gaussian_matrix(RngState& rng, std::size_t rows, std::size_t cols, double mean,
                       double std);

} // namespace kdlab
