#include "kdlab/nn_core.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace kdlab {

namespace {

double& flat_parameter(std::vector<DenseLayer>& layers, std::size_t i) {
  for (auto& layer : layers) {
    const std::size_t nw = layer.weight.size();
    if (i < nw) return layer.weight.data()[i];
    i -= nw;
    if (i < layer.bias.size()) return layer.bias[i];
    i -= layer.bias.size();
  }
  throw std::out_of_range("parameter index out of range");
}

// Computed as (W x^T)^T so only the thin batch matrices are transposed.
Matrix affine(const Matrix& x, const DenseLayer& layer) {
  Matrix z = transpose(matmul(layer.weight, transpose(x)));
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto row = z.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += layer.bias[j];
  }
  return z;
}

Matrix relu(const Matrix& z) {
  Matrix a = z;
  for (double& v : a.data()) v = v > 0.0 ? v : 0.0;
  return a;
}

void check_input(const MlpModel& model, const Matrix& x) {
  if (model.layers().empty()) throw std::invalid_argument("forward: model has no layers");
  if (x.cols() != model.input_dim()) {
    throw std::invalid_argument("forward: input has " + std::to_string(x.cols()) +
                                " columns, model expects " + std::to_string(model.input_dim()));
  }
}

} // namespace

MlpModel::MlpModel(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw std::invalid_argument("MlpModel: no layers");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.bias.size() != layer.out_dim())
      throw std::invalid_argument("MlpModel: bias length does not match layer output");
    if (l > 0 && layer.in_dim() != layers_[l - 1].out_dim())
      throw std::invalid_argument("MlpModel: layer " + std::to_string(l) +
                                  " input does not match previous output");
  }
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

double& MlpModel::parameter(std::size_t i) { return flat_parameter(layers_, i); }

double Gradients::squared_norm() const {
  double s = 0.0;
  for (const auto& layer : layers) {
    for (double v : layer.weight.data()) s += v * v;
    for (double v : layer.bias) s += v * v;
  }
  return s;
}

MlpModel init_params(RngState& rng, std::size_t input_dim, std::size_t hidden_dim,
                     std::size_t num_classes, std::size_t hidden_layers) {
  if (input_dim == 0 || hidden_dim == 0 || num_classes == 0)
    throw std::invalid_argument("init_params: dimensions must be positive");
  std::vector<std::size_t> dims{input_dim};
  for (std::size_t h = 0; h < hidden_layers; ++h) dims.push_back(hidden_dim);
  dims.push_back(num_classes);

  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t fan_in = dims[l];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    DenseLayer layer{Matrix(dims[l + 1], fan_in), std::vector<double>(dims[l + 1], 0.0)};
    for (double& w : layer.weight.data()) w = bound * (2.0 * rng.uniform() - 1.0);
    layers.push_back(std::move(layer));
  }
  return MlpModel(std::move(layers));
}

ForwardResult forward(const MlpModel& model, const Matrix& x) {
  check_input(model, x);
  ForwardCache cache;
  const auto& layers = model.layers();
  cache.inputs.reserve(layers.size());
  cache.pre.reserve(layers.size());
  cache.inputs.push_back(x);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    cache.pre.push_back(affine(cache.inputs.back(), layers[l]));
    if (l + 1 < layers.size()) cache.inputs.push_back(relu(cache.pre.back()));
  }
  cache.logits = cache.pre.back();
  Matrix out = cache.logits;
  return {std::move(out), std::move(cache)};
}

Matrix logits(const MlpModel& model, const Matrix& x) {
  check_input(model, x);
  constexpr std::size_t kChunk = 512;
  const std::size_t classes = model.num_classes();
  Matrix out(x.rows(), classes);
  for (std::size_t start = 0; start < x.rows(); start += kChunk) {
    const std::size_t n = std::min(kChunk, x.rows() - start);
    Matrix a(n, x.cols(), std::vector<double>(x.row(start).begin(), x.row(start).begin() + n * x.cols()));
    for (std::size_t l = 0; l < model.layers().size(); ++l) {
      a = affine(a, model.layers()[l]);
      if (l + 1 < model.layers().size())
        for (double& v : a.data()) v = v > 0.0 ? v : 0.0;
    }
    std::copy(a.data().begin(), a.data().end(), out.row(start).begin());
  }
  return out;
}

Gradients backward(const MlpModel& model, const ForwardCache& cache, const Matrix& dlogits) {
  const auto& layers = model.layers();
  if (cache.inputs.size() != layers.size() || cache.pre.size() != layers.size())
    throw std::invalid_argument("backward: cache does not belong to this model");
  if (dlogits.rows() != cache.logits.rows() || dlogits.cols() != cache.logits.cols())
    throw std::invalid_argument("backward: dlogits shape does not match logits");

  Gradients grads;
  grads.layers.resize(layers.size());
  Matrix dz = dlogits;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const Matrix& input = cache.inputs[l];
    auto& g = grads.layers[l];
    g.weight = matmul(transpose(dz), input);
    g.bias.assign(dz.cols(), 0.0);
    for (std::size_t i = 0; i < dz.rows(); ++i) {
      const auto row = dz.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) g.bias[j] += row[j];
    }
    if (l == 0) break;
    Matrix da = matmul(dz, layers[l].weight);
    const Matrix& pre = cache.pre[l - 1];
    for (std::size_t k = 0; k < da.size(); ++k)
      if (!(pre.data()[k] > 0.0)) da.data()[k] = 0.0;
    dz = std::move(da);
  }
  return grads;
}

void sgd_step(MlpModel& model, const Gradients& grads, double learning_rate) {
  auto& layers = model.layers();
  if (grads.layers.size() != layers.size())
    throw std::invalid_argument("sgd_step: gradient structure does not match model");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto w = layers[l].weight.data();
    const auto gw = grads.layers[l].weight.data();
    if (gw.size() != w.size()) throw std::invalid_argument("sgd_step: weight shape mismatch");
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= learning_rate * gw[k];
    auto& b = layers[l].bias;
    const auto& gb = grads.layers[l].bias;
    for (std::size_t k = 0; k < b.size(); ++k) b[k] -= learning_rate * gb[k];
  }
}

Matrix predict_proba(const MlpModel& model, const Matrix& x) {
  return softmax_rows(logits(model, x));
}

int argmax(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < row.size(); ++c)
    if (row[c] > row[best]) best = c;
  return static_cast<int>(best);
}

std::vector<int> predict_label(const MlpModel& model, const Matrix& x) {
  const Matrix z = logits(model, x);
  std::vector<int> labels(z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) labels[i] = argmax(z.row(i));
  return labels;
}

double grad_check(const MlpModel& model, const LossEvaluator& loss, const Matrix& batch,
                  double epsilon, GradCheckOptions options) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3))
    throw std::invalid_argument("grad_check: epsilon must lie in [1e-7, 1e-3]");

  auto fwd = forward(model, batch);
  Gradients analytic = backward(model, fwd.cache, loss(fwd.logits).dlogits);

  const std::size_t total = model.parameter_count();
  std::vector<std::size_t> coords(total);
  std::iota(coords.begin(), coords.end(), 0);
  if (options.max_coordinates != 0 && options.max_coordinates < total) {
    const std::size_t keep = std::max<std::size_t>(options.max_coordinates, 200);
    RngState rng(options.seed);
    for (std::size_t i = 0; i < std::min(keep, total); ++i)
      std::swap(coords[i], coords[i + rng.uniform_index(total - i)]);
    coords.resize(std::min(keep, total));
  }

  MlpModel probe = model;
  double worst = 0.0;
  for (std::size_t idx : coords) {
    double& theta = probe.parameter(idx);
    const double saved = theta;
    theta = saved + epsilon;
    const double up = loss(logits(probe, batch)).loss;
    theta = saved - epsilon;
    const double down = loss(logits(probe, batch)).loss;
    theta = saved;
    const double fd = (up - down) / (2.0 * epsilon);
    const double g = flat_parameter(analytic.layers, idx);
    const double rel = std::abs(g - fd) / std::max(1e-8, std::abs(g) + std::abs(fd));
    worst = std::max(worst, rel);
  }
  return worst;
}

namespace {

constexpr std::array<char, 8> kMagic{'K', 'D', 'M', 'L', 'P', '\0', '\0', '\1'};

void write_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b;
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), b.size());
}

void write_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<char, 8> b;
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(b.data(), b.size());
}

void read_exact(std::istream& in, char* dst, std::size_t n) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n))
    throw std::runtime_error("load_model: truncated checkpoint");
}

std::uint32_t read_u32(std::istream& in) {
  std::array<unsigned char, 4> b;
  read_exact(in, reinterpret_cast<char*>(b.data()), b.size());
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double read_f64(std::istream& in) {
  std::array<unsigned char, 8> b;
  read_exact(in, reinterpret_cast<char*>(b.data()), b.size());
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

} // namespace

void save_model(const MlpModel& model, std::ostream& out) {
  out.write(kMagic.data(), kMagic.size());
  write_u32(out, static_cast<std::uint32_t>(model.layers().size()));
  for (const auto& layer : model.layers()) {
    write_u32(out, static_cast<std::uint32_t>(layer.in_dim()));
    write_u32(out, static_cast<std::uint32_t>(layer.out_dim()));
  }
  for (const auto& layer : model.layers()) {
    for (double w : layer.weight.data()) write_f64(out, w);
    for (double b : layer.bias) write_f64(out, b);
  }
  if (!out) throw std::runtime_error("save_model: write failed");
}

MlpModel load_model(std::istream& in) {
  std::array<char, 8> magic;
  read_exact(in, magic.data(), magic.size());
  if (magic != kMagic) throw std::runtime_error("load_model: not a model checkpoint");
  const std::uint32_t count = read_u32(in);
  if (count == 0 || count > 64) throw std::runtime_error("load_model: bad layer count");
  std::vector<std::pair<std::uint32_t, std::uint32_t>> dims(count);
  for (auto& [in_dim, out_dim] : dims) {
    in_dim = read_u32(in);
    out_dim = read_u32(in);
  }
  std::vector<DenseLayer> layers;
  for (const auto& [in_dim, out_dim] : dims) {
    DenseLayer layer{Matrix(out_dim, in_dim), std::vector<double>(out_dim)};
    for (double& w : layer.weight.data()) w = read_f64(in);
    for (double& b : layer.bias) b = read_f64(in);
    layers.push_back(std::move(layer));
  }
  return MlpModel(std::move(layers));
}

void save_model(const MlpModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  save_model(model, out);
}

MlpModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return load_model(in);
}

} // namespace kdlab
