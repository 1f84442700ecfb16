#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <vector>

#include "kdlab/losses.hpp"
#include "kdlab/rng.hpp"
#include "kdlab/tensor_math.hpp"

namespace kdlab {

/// y = x W^T + b, with W stored as [out x in].
struct DenseLayer {
  Matrix weight;
  std::vector<double> bias;

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Feed-forward ReLU network: ReLU after every layer but the last, whose
/// output is the logit vector. The default shape is two hidden layers of 128.
class MlpModel {
public:
  MlpModel() = default;
  /// Throws std::invalid_argument if consecutive layer shapes do not chain.
  explicit MlpModel(std::vector<DenseLayer> layers);

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  std::size_t input_dim() const { return layers_.front().in_dim(); }
  std::size_t num_classes() const { return layers_.back().out_dim(); }
  std::size_t parameter_count() const;

  /// Parameter i in serialization order (per layer: weight row-major, then bias).
  double& parameter(std::size_t i);

  friend bool operator==(const MlpModel&, const MlpModel&) = default;

private:
  std::vector<DenseLayer> layers_;
};

/// Same structure as the model; holds dL/dW and dL/db.
struct Gradients {
  std::vector<DenseLayer> layers;

  double squared_norm() const;
};

/// Intermediates kept by forward() for backward().
struct ForwardCache {
  std::vector<Matrix> inputs; ///< inputs[l]: the matrix fed to layer l (inputs[0] = x)
  std::vector<Matrix> pre;    ///< pre[l]: layer l output before activation
  Matrix logits;
};

struct ForwardResult {
  Matrix logits;
  ForwardCache cache;
};

/// He-style uniform init, weights ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases.
MlpModel init_params(RngState& rng, std::size_t input_dim, std::size_t hidden_dim,
                     std::size_t num_classes, std::size_t hidden_layers = 2);

ForwardResult forward(const MlpModel& model, const Matrix& x);

/// Logits only, processed in chunks without keeping a cache.
Matrix logits(const MlpModel& model, const Matrix& x);

/// Reverse-mode gradients of the forward map contracted with dlogits.
/// ReLU'(0) is taken as 0.
Gradients backward(const MlpModel& model, const ForwardCache& cache, const Matrix& dlogits);

/// theta <- theta - lr * grad.
void sgd_step(MlpModel& model, const Gradients& grads, double learning_rate);

/// Row-wise softmax of the logits.
Matrix predict_proba(const MlpModel& model, const Matrix& x);

/// Row-wise argmax of the logits; ties go to the lowest index.
std::vector<int> predict_label(const MlpModel& model, const Matrix& x);
int argmax(std::span<const double> row);

using LossEvaluator = std::function<LossAndGrad(const Matrix& logits)>;

struct GradCheckOptions {
  /// 0 checks every parameter; otherwise a uniform random subset of this
  /// many coordinates (at least 200) drawn with `seed`.
  std::size_t max_coordinates = 0;
  std::uint64_t seed = 0;
};

/// Largest |g - g_fd| / max(1e-8, |g| + |g_fd|) over the checked coordinates,
/// with g_fd the central difference (L(theta + eps) - L(theta - eps)) / 2 eps.
double grad_check(const MlpModel& model, const LossEvaluator& loss, const Matrix& batch,
                  double epsilon, GradCheckOptions options = {});

// Checkpoint format (all integers and doubles little-endian):
//   "KDMLP\0\0\1"  magic + version
//   u32 layer_count, then per layer u32 in_dim, u32 out_dim
//   per layer: weight (out x in, row-major) then bias, as IEEE-754 binary64
void save_model(const MlpModel& model, std::ostream& out);
MlpModel load_model(std::istream& in);
void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

} // namespace kdlab
