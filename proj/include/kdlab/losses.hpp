#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "kdlab/tensor_math.hpp"

namespace kdlab {

enum class LossKind { CE, MSE };

std::string_view to_string(LossKind kind);
/// Accepts "ce" / "mse" in any case. Throws std::invalid_argument otherwise.
LossKind parse_loss_kind(std::string_view text);

/// Mean loss over a batch and its gradient with respect to the logits.
struct LossAndGrad {
  double loss = 0.0;
  Matrix dlogits;
};

/// Per-sample supervision: either a hard label or a soft probability row.
///
/// Rows are stored densely (a hard label k is kept as the basis vector e_k)
/// together with a flag, so mixed supervision (labeled one-hot rows next to
/// pseudo-labeled soft rows) is one object.
class TargetDistribution {
public:
  static TargetDistribution one_hot(std::span<const int> labels, std::size_t num_classes);
  /// Every row must satisfy the simplex invariants.
  static TargetDistribution soft(Matrix probs);

  std::size_t rows() const { return probs_.rows(); }
  std::size_t num_classes() const { return probs_.cols(); }

  bool is_one_hot(std::size_t i) const { return hard_[i] != 0; }
  /// Class index of a one-hot row.
  int label(std::size_t i) const;
  std::span<const double> row(std::size_t i) const { return probs_.row(i); }
  const Matrix& probs() const { return probs_; }

  /// Replace row i by a one-hot / soft row.
  void set_one_hot(std::size_t i, int label);
  void set_soft(std::size_t i, std::span<const double> probs);

  /// Rows at `indices`, in that order.
  TargetDistribution gather(std::span<const std::size_t> indices) const;

private:
  TargetDistribution(Matrix probs, std::vector<std::uint8_t> hard)
      : probs_(std::move(probs)), hard_(std::move(hard)) {}

  Matrix probs_;
  std::vector<std::uint8_t> hard_;
};

/// Mean cross-entropy H(t_n, softmax(z_n)) and dlogits = (p - t) / B.
///
/// With temperature T != 1, soft rows use softmax(z / T) against the target
/// sharpened/softened as softmax(log t / T); the gradient carries the 1/T
/// chain factor. One-hot rows ignore T.
LossAndGrad ce_loss_and_grad(const Matrix& logits, const TargetDistribution& targets,
                             double temperature = 1.0);

/// Mean Brier score ||t_n - softmax(z_n)||^2 with its logit gradient
/// (2/B) J^T (p - t), J the softmax Jacobian.
LossAndGrad mse_loss_and_grad(const Matrix& logits, const TargetDistribution& targets);

LossAndGrad loss_and_grad(LossKind kind, const Matrix& logits, const TargetDistribution& targets,
                          double temperature = 1.0);

/// Squared Euclidean distance sum_c (p[c] - q[c])^2. No division by C.
double mse_distance(std::span<const double> p, std::span<const double> q);
inline double mse_distance(const ProbVector& p, const ProbVector& q) {
  return mse_distance(p.values(), q.values());
}

inline constexpr double kCeFloor = 1e-12;

/// Cross-entropy H(p, q) = -sum_c p[c] ln max(q[c], 1e-12).
double ce_distance(std::span<const double> p, std::span<const double> q);
inline double ce_distance(const ProbVector& p, const ProbVector& q) {
  return ce_distance(p.values(), q.values());
}

/// E_{y ~ p_star}[loss(one_hot(y), p)], computed by enumerating the C labels.
double expected_loss_over_labels(const ProbVector& p_star, const ProbVector& p, LossKind kind);

} // namespace kdlab
