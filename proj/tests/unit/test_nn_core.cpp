#include <doctest.h>

#include <bit>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "kdlab/nn_core.hpp"

using namespace kdlab;

namespace {

MlpModel hand_model() {
  DenseLayer l1{Matrix::from_rows({{1.0, -1.0}, {0.5, 2.0}}), {0.0, -1.0}};
  DenseLayer l2{Matrix::from_rows({{1.0, 1.0}, {-1.0, 2.0}}), {0.5, 0.0}};
  return MlpModel({l1, l2});
}

std::uint64_t parameter_digest(MlpModel& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < m.parameter_count(); ++i) {
    h ^= std::bit_cast<std::uint64_t>(m.parameter(i));
    h *= 0x100000001b3ULL;
  }
  return h;
}

} // namespace

TEST_CASE("forward pass of a 2-2-2 network by hand") {
  const MlpModel m = hand_model();
  // x = [1, 2]: pre = [-1, 3.5], relu = [0, 3.5], logits = [4, 7].
  // x = [0, 1]: pre = [-1, 1],   relu = [0, 1],   logits = [1.5, 2].
  const Matrix x = Matrix::from_rows({{1.0, 2.0}, {0.0, 1.0}});
  const auto f = forward(m, x);
  CHECK(f.logits == Matrix::from_rows({{4.0, 7.0}, {1.5, 2.0}}));
  CHECK(f.cache.pre[0] == Matrix::from_rows({{-1.0, 3.5}, {-1.0, 1.0}}));
  CHECK(f.cache.inputs[1] == Matrix::from_rows({{0.0, 3.5}, {0.0, 1.0}}));
  CHECK(logits(m, x) == f.logits);
  CHECK(predict_label(m, x) == std::vector<int>{1, 1});
  const Matrix p = predict_proba(m, x);
  CHECK(p(0, 1) == doctest::Approx(1.0 / (1.0 + std::exp(-3.0))).epsilon(1e-15));
}

TEST_CASE("backward of the 2-2-2 network by hand") {
  const MlpModel m = hand_model();
  const Matrix x = Matrix::from_rows({{1.0, 2.0}});
  const auto f = forward(m, x);
  const Matrix dz = Matrix::from_rows({{1.0, -2.0}});
  const Gradients g = backward(m, f.cache, dz);
  // dW2 = dz^T a1, a1 = [0, 3.5]; da1 = dz W2 = [3, -3], masked by pre > 0 -> [0, -3].
  CHECK(g.layers[1].weight == Matrix::from_rows({{0.0, 3.5}, {0.0, -7.0}}));
  CHECK(g.layers[1].bias == std::vector<double>{1.0, -2.0});
  CHECK(g.layers[0].weight == Matrix::from_rows({{0.0, 0.0}, {-3.0, -6.0}}));
  CHECK(g.layers[0].bias == std::vector<double>{0.0, -3.0});
  CHECK(g.squared_norm() == doctest::Approx(12.25 + 49 + 1 + 4 + 9 + 36 + 9));
}

TEST_CASE("gradient check on random micro models") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RngState rng(100 + seed);
    const MlpModel m = init_params(rng, 5, 7, 3);
    const Matrix x = gaussian_matrix(rng, 4, 5, 0.0, 1.0);
    std::vector<int> y(4);
    for (int& v : y) v = static_cast<int>(rng.uniform_index(3));
    const auto hard = TargetDistribution::one_hot(y, 3);
    for (LossKind kind : {LossKind::CE, LossKind::MSE}) {
      const LossEvaluator loss = [&](const Matrix& z) { return loss_and_grad(kind, z, hard); };
      CAPTURE(seed);
      CHECK(grad_check(m, loss, x, 1e-5) < 1e-5);
    }
  }
}

TEST_CASE("grad_check detects a wrong gradient and validates epsilon") {
  RngState rng(7);
  const MlpModel m = init_params(rng, 3, 4, 2);
  const Matrix x = gaussian_matrix(rng, 2, 3, 0.0, 1.0);
  const auto t = TargetDistribution::one_hot(std::vector<int>{0, 1}, 2);
  const LossEvaluator halved = [&](const Matrix& z) {
    LossAndGrad r = ce_loss_and_grad(z, t);
    for (double& g : r.dlogits.data()) g *= 0.5;
    return r;
  };
  CHECK(grad_check(m, halved, x, 1e-5) > 0.1);
  const LossEvaluator ok = [&](const Matrix& z) { return ce_loss_and_grad(z, t); };
  CHECK_THROWS_AS(grad_check(m, ok, x, 1e-2), std::invalid_argument);
  CHECK_THROWS_AS(grad_check(m, ok, x, 1e-9), std::invalid_argument);
  CHECK(grad_check(m, ok, x, 1e-5, {.max_coordinates = 5, .seed = 1}) < 1e-5);
}

TEST_CASE("rows are processed independently") {
  RngState rng(31);
  const MlpModel m = init_params(rng, 30, 128, 3);
  const Matrix x = gaussian_matrix(rng, 700, 30, 0.0, 4.0);
  const Matrix all = logits(m, x);
  CHECK(forward(m, x).logits == all);
  for (std::size_t i : {0u, 1u, 511u, 512u, 699u}) {
    const Matrix one(1, 30, std::vector<double>(x.row(i).begin(), x.row(i).end()));
    const Matrix z = logits(m, one);
    for (std::size_t c = 0; c < 3; ++c) CHECK(z(0, c) == all(i, c));
  }
  CHECK_THROWS_AS(logits(m, Matrix(2, 29)), std::invalid_argument);
}

TEST_CASE("the last layer is affine in the last hidden activation") {
  RngState rng(32);
  const MlpModel m = init_params(rng, 4, 6, 3, 0);
  const Matrix a = gaussian_matrix(rng, 1, 4, 0.0, 1.0);
  const Matrix b = gaussian_matrix(rng, 1, 4, 0.0, 1.0);
  Matrix sum(1, 4);
  for (std::size_t j = 0; j < 4; ++j) sum(0, j) = a(0, j) + b(0, j);
  const Matrix za = logits(m, a), zb = logits(m, b), zs = logits(m, sum);
  // Biases are zero at init, so a linear model is additive.
  for (std::size_t c = 0; c < 3; ++c) CHECK(zs(0, c) == doctest::Approx(za(0, c) + zb(0, c)));
}

TEST_CASE("init_params shape, bounds and determinism") {
  RngState r1(2024), r2(2024);
  MlpModel a = init_params(r1, 30, 128, 3);
  const MlpModel b = init_params(r2, 30, 128, 3);
  CHECK(a == b);
  REQUIRE(a.layers().size() == 3);
  CHECK(a.parameter_count() == 30 * 128 + 128 + 128 * 128 + 128 + 128 * 3 + 3);
  for (const auto& layer : a.layers()) {
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.in_dim()));
    double max_abs = 0.0;
    for (double w : layer.weight.data()) max_abs = std::max(max_abs, std::abs(w));
    CHECK(max_abs <= bound);
    CHECK(max_abs > 0.9 * bound);
    for (double v : layer.bias) CHECK(v == 0.0);
  }
  // Frozen digest of the parameter bits for this seed.
  CHECK(parameter_digest(a) == 0x1bf380fba4bed22dULL);
  CHECK_THROWS_AS(init_params(r1, 0, 4, 2), std::invalid_argument);
}

TEST_CASE("sgd_step") {
  RngState rng(41);
  MlpModel m = init_params(rng, 5, 7, 3);
  const Matrix x = gaussian_matrix(rng, 8, 5, 0.0, 1.0);
  const auto t = TargetDistribution::one_hot(std::vector<int>{0, 1, 2, 0, 1, 2, 0, 1}, 3);
  const auto f = forward(m, x);
  const LossAndGrad lg = ce_loss_and_grad(f.logits, t);
  const Gradients g = backward(m, f.cache, lg.dlogits);

  MlpModel frozen = m;
  sgd_step(frozen, g, 0.0);
  CHECK(frozen == m);

  MlpModel stepped = m;
  sgd_step(stepped, g, 1e-2);
  CHECK(stepped.layers()[0].weight(0, 0) == m.layers()[0].weight(0, 0) - 1e-2 * g.layers[0].weight(0, 0));
  const double after = ce_loss_and_grad(logits(stepped, x), t).loss;
  // First-order decrease lr * |g|^2 up to curvature.
  CHECK(after < lg.loss);
  CHECK(lg.loss - after == doctest::Approx(1e-2 * g.squared_norm()).epsilon(0.05));
}

TEST_CASE("argmax ties go to the lowest index") {
  CHECK(argmax(std::vector<double>{1.0, 3.0, 3.0}) == 1);
  CHECK(argmax(std::vector<double>{2.0}) == 0);
}

TEST_CASE("checkpoint round trip") {
  RngState rng(55);
  const MlpModel m = init_params(rng, 6, 5, 4);
  std::stringstream buf;
  save_model(m, buf);
  const std::string bytes = buf.str();
  CHECK(bytes.size() == 8 + 4 + 3 * 8 + 8 * m.parameter_count());
  CHECK(bytes.substr(0, 5) == "KDMLP");
  std::istringstream in(bytes);
  CHECK(load_model(in) == m);

  std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_model(truncated), std::runtime_error);
  std::string bad = bytes;
  bad[0] = 'X';
  std::istringstream wrong_magic(bad);
  CHECK_THROWS_AS(load_model(wrong_magic), std::runtime_error);
}

TEST_CASE("MlpModel rejects layers that do not chain") {
  DenseLayer a{Matrix(4, 3), std::vector<double>(4)};
  DenseLayer b{Matrix(2, 5), std::vector<double>(2)};
  CHECK_THROWS_AS(MlpModel({a, b}), std::invalid_argument);
  DenseLayer bad_bias{Matrix(4, 3), std::vector<double>(3)};
  CHECK_THROWS_AS(MlpModel({bad_bias}), std::invalid_argument);
  CHECK_THROWS_AS(MlpModel(std::vector<DenseLayer>{}), std::invalid_argument);
}
