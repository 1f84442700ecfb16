#include "kdlab/tensor_math.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace kdlab {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw std::invalid_argument("Matrix: data length " + std::to_string(data_.size()) +
                                " != " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw std::invalid_argument("Matrix::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

ProbVector::ProbVector(std::vector<double> values) : values_(std::move(values)) {
  if (!is_valid(values_)) throw std::invalid_argument("ProbVector: not on the simplex");
}

bool ProbVector::is_valid(std::span<const double> values) {
  if (values.empty()) return false;
  double sum = 0.0;
  for (double v : values) {
    if (!(v >= 0.0) || !std::isfinite(v)) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= kSumTolerance;
}

namespace {

// Register-blocked kernels using GCC/Clang vector extensions. Every lane is
// an independent accumulator that starts at zero and receives its products in
// increasing inner index, so results are bit-identical to the plain triple
// loop (with std::fma when this file is contracted for an FMA target).
typedef double v4d __attribute__((vector_size(32)));
typedef double v4d_unaligned __attribute__((vector_size(32), aligned(8), may_alias));
typedef double v8d __attribute__((vector_size(64)));
typedef double v8d_unaligned __attribute__((vector_size(64), aligned(8), may_alias));

inline v4d load(const double* p, v4d) { return *reinterpret_cast<const v4d_unaligned*>(p); }
inline v8d load(const double* p, v8d) { return *reinterpret_cast<const v8d_unaligned*>(p); }
inline void store(double* p, v4d v) { *reinterpret_cast<v4d_unaligned*>(p) = v; }
inline void store(double* p, v8d v) { *reinterpret_cast<v8d_unaligned*>(p) = v; }

// RB rows x (2 * lanes(V)) columns of C.
template <std::size_t RB, typename V>
void tile_kernel(const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
                 std::size_t ldc, std::size_t inner) {
  constexpr std::size_t L = sizeof(V) / sizeof(double);
  V acc[RB][2] = {};
  for (std::size_t p = 0; p < inner; ++p) {
    const V b0 = load(b + p * ldb, V{});
    const V b1 = load(b + p * ldb + L, V{});
    for (std::size_t i = 0; i < RB; ++i) {
      const double av = a[i * lda + p];
      acc[i][0] += av * b0;
      acc[i][1] += av * b1;
    }
  }
  for (std::size_t i = 0; i < RB; ++i) {
    store(c + i * ldc, acc[i][0]);
    store(c + i * ldc + L, acc[i][1]);
  }
}

// Scalar fallback for tiles narrower than 8 columns or shorter than 4 rows.
// Up to 8 columns are accumulated side by side so the chains stay independent.
void edge_kernel(const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
                 std::size_t ldc, std::size_t inner, std::size_t rb, std::size_t cb) {
  for (std::size_t i = 0; i < rb; ++i) {
    double acc[8] = {};
    for (std::size_t p = 0; p < inner; ++p) {
      const double av = a[i * lda + p];
      const double* brow = b + p * ldb;
      for (std::size_t j = 0; j < cb; ++j) acc[j] += av * brow[j];
    }
    for (std::size_t j = 0; j < cb; ++j) c[i * ldc + j] = acc[j];
  }
}

} // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + ")");
  }
  const std::size_t m = a.rows();
  const std::size_t k = a.cols();
  const std::size_t n = b.cols();
  Matrix c(m, n);
  const double* ap = a.data().data();
  const double* bp = b.data().data();
  double* cp = c.data().data();

  // Column panels of 16 (8-row tiles, then 4-row tiles), then of 8, then the
  // scalar remainder.
  std::size_t j = 0;
  for (; j + 16 <= n; j += 16) {
    std::size_t i = 0;
    for (; i + 8 <= m; i += 8) tile_kernel<8, v8d>(ap + i * k, k, bp + j, n, cp + i * n + j, n, k);
    for (; i + 4 <= m; i += 4) tile_kernel<4, v8d>(ap + i * k, k, bp + j, n, cp + i * n + j, n, k);
    if (i < m) edge_kernel(ap + i * k, k, bp + j, n, cp + i * n + j, n, k, m - i, 8),
               edge_kernel(ap + i * k, k, bp + j + 8, n, cp + i * n + j + 8, n, k, m - i, 8);
  }
  for (; j + 8 <= n; j += 8) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) tile_kernel<4, v4d>(ap + i * k, k, bp + j, n, cp + i * n + j, n, k);
    if (i < m) edge_kernel(ap + i * k, k, bp + j, n, cp + i * n + j, n, k, m - i, 8);
  }
  if (j < n) edge_kernel(ap, k, bp + j, n, cp + j, n, k, m, n - j);
  return c;
}

Matrix transpose(const Matrix& a) {
  constexpr std::size_t kBlock = 16;
  Matrix t(a.cols(), a.rows());
  for (std::size_t i0 = 0; i0 < a.rows(); i0 += kBlock) {
    const std::size_t i1 = std::min(a.rows(), i0 + kBlock);
    for (std::size_t j0 = 0; j0 < a.cols(); j0 += kBlock) {
      const std::size_t j1 = std::min(a.cols(), j0 + kBlock);
      for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t j = j0; j < j1; ++j) t(j, i) = a(i, j);
    }
  }
  return t;
}

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("log_sum_exp: empty input");
  const double mx = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - mx);
  return mx + std::log(sum);
}

void softmax_into(std::span<const double> logits, std::span<double> out) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  if (out.size() != logits.size()) throw std::invalid_argument("softmax: output size mismatch");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& o : out) o /= sum;
}

ProbVector softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  softmax_into(logits, out);
  return ProbVector(std::move(out), ProbVector::Unchecked{});
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) softmax_into(logits.row(i), out.row(i));
  return out;
}

Matrix gaussian_matrix(RngState& rng, std::size_t rows, std::size_t cols, double mean,
                       double std) {
  if (!(std > 0.0)) throw std::invalid_argument("gaussian_matrix: std must be positive");
  Matrix m(rows, cols);
  for (double& v : m.data()) v = mean + std * rng.normal();
  return m;
}

} // namespace kdlab
