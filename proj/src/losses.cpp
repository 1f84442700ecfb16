#include "kdlab/losses.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>
#include <string>

namespace kdlab {

std::string_view to_string(LossKind kind) {
  return kind == LossKind::CE ? "ce" : "mse";
}

LossKind parse_loss_kind(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "ce") return LossKind::CE;
  if (lower == "mse") return LossKind::MSE;
  throw std::invalid_argument("unknown loss kind '" + std::string(text) + "' (expected ce|mse)");
}

TargetDistribution TargetDistribution::one_hot(std::span<const int> labels,
                                               std::size_t num_classes) {
  Matrix probs(labels.size(), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)
      throw std::invalid_argument("TargetDistribution: label out of range");
    probs(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return TargetDistribution(std::move(probs), std::vector<std::uint8_t>(labels.size(), 1));
}

TargetDistribution TargetDistribution::soft(Matrix probs) {
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    if (!ProbVector::is_valid(probs.row(i)))
      throw std::invalid_argument("TargetDistribution: soft row " + std::to_string(i) +
                                  " is not a probability vector");
  }
  std::vector<std::uint8_t> hard(probs.rows(), 0);
  return TargetDistribution(std::move(probs), std::move(hard));
}

int TargetDistribution::label(std::size_t i) const {
  if (!is_one_hot(i)) throw std::logic_error("TargetDistribution: row is not one-hot");
  const auto r = row(i);
  return static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
}

void TargetDistribution::set_one_hot(std::size_t i, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= num_classes())
    throw std::invalid_argument("TargetDistribution: label out of range");
  auto r = probs_.row(i);
  std::fill(r.begin(), r.end(), 0.0);
  r[static_cast<std::size_t>(label)] = 1.0;
  hard_[i] = 1;
}

void TargetDistribution::set_soft(std::size_t i, std::span<const double> probs) {
  if (probs.size() != num_classes() || !ProbVector::is_valid(probs))
    throw std::invalid_argument("TargetDistribution: soft row is not a probability vector");
  std::copy(probs.begin(), probs.end(), probs_.row(i).begin());
  hard_[i] = 0;
}

TargetDistribution TargetDistribution::gather(std::span<const std::size_t> indices) const {
  Matrix probs(indices.size(), num_classes());
  std::vector<std::uint8_t> hard(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto src = row(indices[k]);
    std::copy(src.begin(), src.end(), probs.row(k).begin());
    hard[k] = hard_[indices[k]];
  }
  return TargetDistribution(std::move(probs), std::move(hard));
}

namespace {

void check_shapes(const Matrix& logits, const TargetDistribution& targets) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.num_classes())
    throw std::invalid_argument("loss: logits and targets shapes differ");
  if (logits.rows() == 0) throw std::invalid_argument("loss: empty batch");
}

} // namespace

LossAndGrad ce_loss_and_grad(const Matrix& logits, const TargetDistribution& targets,
                             double temperature) {
  check_shapes(logits, targets);
  if (!(temperature > 0.0)) throw std::invalid_argument("ce loss: temperature must be positive");
  const std::size_t batch = logits.rows();
  const std::size_t classes = logits.cols();
  const double inv_b = 1.0 / static_cast<double>(batch);
  LossAndGrad out{0.0, Matrix(batch, classes)};
  std::vector<double> z(classes), p(classes), t(classes), log_t(classes);

  for (std::size_t n = 0; n < batch; ++n) {
    const auto row = logits.row(n);
    const auto target = targets.row(n);
    const bool scaled = temperature != 1.0 && !targets.is_one_hot(n);
    const double tau = scaled ? temperature : 1.0;
    for (std::size_t c = 0; c < classes; ++c) z[c] = row[c] / tau;
    const double lse = log_sum_exp(z);
    if (scaled) {
      for (std::size_t c = 0; c < classes; ++c)
        log_t[c] = std::log(std::max(target[c], kCeFloor)) / tau;
      softmax_into(log_t, t);
    } else {
      std::copy(target.begin(), target.end(), t.begin());
    }
    softmax_into(z, p);
    double loss = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      if (t[c] != 0.0) loss -= t[c] * (z[c] - lse);
    }
    out.loss += loss;
    auto grad = out.dlogits.row(n);
    for (std::size_t c = 0; c < classes; ++c) grad[c] = (p[c] - t[c]) * inv_b / tau;
  }
  out.loss *= inv_b;
  return out;
}

LossAndGrad mse_loss_and_grad(const Matrix& logits, const TargetDistribution& targets) {
  check_shapes(logits, targets);
  const std::size_t batch = logits.rows();
  const std::size_t classes = logits.cols();
  const double inv_b = 1.0 / static_cast<double>(batch);
  LossAndGrad out{0.0, Matrix(batch, classes)};
  std::vector<double> p(classes), g(classes);

  for (std::size_t n = 0; n < batch; ++n) {
    softmax_into(logits.row(n), p);
    const auto target = targets.row(n);
    double loss = 0.0;
    double pg = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double diff = p[c] - target[c];
      loss += diff * diff;
      g[c] = 2.0 * diff * inv_b;
      pg += p[c] * g[c];
    }
    out.loss += loss;
    auto grad = out.dlogits.row(n);
    for (std::size_t c = 0; c < classes; ++c) grad[c] = p[c] * g[c] - pg * p[c];
  }
  out.loss *= inv_b;
  return out;
}

LossAndGrad loss_and_grad(LossKind kind, const Matrix& logits, const TargetDistribution& targets,
                          double temperature) {
  return kind == LossKind::CE ? ce_loss_and_grad(logits, targets, temperature)
                              : mse_loss_and_grad(logits, targets);
}

double mse_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("mse_distance: length mismatch");
  double sum = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    const double d = p[c] - q[c];
    sum += d * d;
  }
  return sum;
}

double ce_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("ce_distance: length mismatch");
  double sum = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) sum -= p[c] * std::log(std::max(q[c], kCeFloor));
  return sum;
}

double expected_loss_over_labels(const ProbVector& p_star, const ProbVector& p, LossKind kind) {
  const std::size_t classes = p_star.size();
  if (p.size() != classes) throw std::invalid_argument("expected_loss_over_labels: length mismatch");
  std::vector<double> e(classes, 0.0);
  double total = 0.0;
  for (std::size_t y = 0; y < classes; ++y) {
    e[y] = 1.0;
    const double loss = kind == LossKind::CE ? ce_distance(e, p.values()) : mse_distance(e, p.values());
    e[y] = 0.0;
    total += p_star[y] * loss;
  }
  return total;
}

} // namespace kdlab
