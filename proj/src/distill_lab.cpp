#include "kdlab/distill_lab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace kdlab {

void TrainConfig::validate() const {
  // lr == 0 is accepted: it is the frozen-parameter run.
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("TrainConfig: learning_rate must be non-negative");
  if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (epochs == 0) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (!(temperature > 0.0)) throw std::invalid_argument("TrainConfig: temperature must be positive");
  if (hidden_dim == 0) throw std::invalid_argument("TrainConfig: hidden_dim must be >= 1");
}

namespace {

template <typename Fn>
void parallel_for(std::size_t count, std::size_t jobs, const RunOptions& options, Fn&& body) {
  std::mutex progress_mutex;
  std::size_t finished = 0;
  const auto report = [&] {
    if (!options.progress) return;
    std::lock_guard lock(progress_mutex);
    options.progress(++finished, count);
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) {
      body(i);
      report();
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::jthread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
          report();
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  workers.clear();
  if (error) std::rethrow_exception(error);
}

std::vector<std::size_t> checked_train_rows(const LabeledDataset& data,
                                            std::span<const std::size_t> rows) {
  std::vector<std::size_t> out(rows.begin(), rows.end());
  for (std::size_t i : out) {
    if (i >= data.size() || data.split[i] != SplitTag::Train)
      throw std::invalid_argument("train_model: training row " + std::to_string(i) +
                                  " is not in the train split");
  }
  return out;
}

TargetDistribution teacher_targets(const MlpModel& teacher, const LabeledDataset& data,
                                   std::span<const std::size_t> rows, TargetDistribution base) {
  const Matrix probs = predict_proba(teacher, gather_rows(data.x, rows));
  for (std::size_t k = 0; k < rows.size(); ++k) base.set_soft(rows[k], probs.row(k));
  return base;
}

} // namespace

TrainResult train_model(const TrainConfig& cfg, const LabeledDataset& data,
                        const TargetDistribution& targets, RngState rng) {
  const auto rows = data.indices(SplitTag::Train);
  return train_model(cfg, data, targets, std::move(rng), rows);
}

TrainResult train_model(const TrainConfig& cfg, const LabeledDataset& data,
                        const TargetDistribution& targets, RngState rng,
                        std::span<const std::size_t> train_rows) {
  cfg.validate();
  if (targets.rows() != data.size() || targets.num_classes() != data.num_classes())
    throw std::invalid_argument("train_model: targets do not cover the dataset");
  std::vector<std::size_t> order = checked_train_rows(data, train_rows);
  if (order.empty()) throw std::invalid_argument("train_model: no training rows");

  MlpModel model =
      init_params(rng, data.dim(), cfg.hidden_dim, data.num_classes(), cfg.hidden_layers);

  const auto val_rows = data.indices(SplitTag::Val);
  const Matrix val_x = gather_rows(data.x, val_rows);
  const std::vector<int> val_y = gather(data.y, val_rows);
  const TargetDistribution val_targets = TargetDistribution::one_hot(val_y, data.num_classes());

  TrainHistory history;
  history.reserve(cfg.epochs);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_index(i)]);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      const std::span<const std::size_t> batch(order.data() + start, n);
      const Matrix x = gather_rows(data.x, batch);
      const TargetDistribution t = targets.gather(batch);
      auto fwd = forward(model, x);
      const LossAndGrad lg = loss_and_grad(cfg.loss_kind, fwd.logits, t, cfg.temperature);
      const Gradients grads = backward(model, fwd.cache, lg.dlogits);
      sgd_step(model, grads, cfg.learning_rate);
      loss_sum += lg.loss;
      ++batches;
    }

    EpochStats stats;
    stats.train_loss = loss_sum / static_cast<double>(batches);
    if (val_rows.empty()) {
      stats.val_loss = std::numeric_limits<double>::quiet_NaN();
      stats.val_accuracy = std::numeric_limits<double>::quiet_NaN();
    } else {
      const Matrix z = logits(model, val_x);
      stats.val_loss = loss_and_grad(cfg.loss_kind, z, val_targets).loss;
      std::size_t hits = 0;
      for (std::size_t i = 0; i < z.rows(); ++i)
        if (argmax(z.row(i)) == val_y[i]) ++hits;
      stats.val_accuracy = static_cast<double>(hits) / static_cast<double>(val_rows.size());
    }
    history.push_back(stats);
  }
  return {std::move(model), std::move(history)};
}

double evaluate_accuracy(const MlpModel& model, const LabeledDataset& data, SplitTag tag) {
  const auto rows = data.indices(tag);
  if (rows.empty()) throw std::invalid_argument("evaluate_accuracy: empty split");
  const auto predicted = predict_label(model, gather_rows(data.x, rows));
  std::size_t hits = 0;
  for (std::size_t k = 0; k < rows.size(); ++k)
    if (predicted[k] == data.y[rows[k]]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

BcpdDistance mean_distance_to_bcpd(const Matrix& estimates, const Matrix& bcpd) {
  if (estimates.rows() != bcpd.rows() || estimates.cols() != bcpd.cols())
    throw std::invalid_argument("mean_distance_to_bcpd: shape mismatch");
  if (estimates.rows() == 0) throw std::invalid_argument("mean_distance_to_bcpd: no rows");
  BcpdDistance d;
  for (std::size_t i = 0; i < estimates.rows(); ++i) {
    d.mean_mse += mse_distance(bcpd.row(i), estimates.row(i));
    d.mean_ce += ce_distance(bcpd.row(i), estimates.row(i));
  }
  const double n = static_cast<double>(estimates.rows());
  d.mean_mse /= n;
  d.mean_ce /= n;
  return d;
}

BcpdDistance evaluate_distance_to_bcpd(const MlpModel& model, const LabeledDataset& data,
                                       SplitTag tag) {
  const auto rows = data.indices(tag);
  if (rows.empty()) throw std::invalid_argument("evaluate_distance_to_bcpd: empty split");
  return mean_distance_to_bcpd(predict_proba(model, gather_rows(data.x, rows)),
                               gather_rows(data.bcpd, rows));
}

std::string provenance_label(const ExperimentRecord& record) {
  switch (record.provenance) {
  case Provenance::NoisyBcpd: return "noisy_bcpd";
  case Provenance::Teacher: return "teacher";
  case Provenance::ExactBcpd: return "exact_bcpd";
  case Provenance::OneHot: return "one_hot";
  case Provenance::SemiTeacher:
    return "semi@" + format_double(record.labeled_fraction.value_or(0.0));
  }
  return "?";
}

TargetDistribution teacher_soft_targets(const MlpModel& teacher, const LabeledDataset& data) {
  return teacher_targets(teacher, data, data.indices(SplitTag::Train),
                         TargetDistribution::one_hot(data.y, data.num_classes()));
}

double distill_student(const TrainConfig& base_cfg, const LabeledDataset& data,
                       const TargetDistribution& targets, RngState rng) {
  TrainConfig cfg = base_cfg;
  cfg.loss_kind = LossKind::CE;
  const TrainResult student = train_model(cfg, data, targets, std::move(rng));
  return evaluate_accuracy(student.model, data, SplitTag::Test);
}

ExperimentRecord run_reference_student(const TrainConfig& base_cfg, const LabeledDataset& data,
                                       Provenance targets, RngState rng) {
  if (targets != Provenance::ExactBcpd && targets != Provenance::OneHot)
    throw std::invalid_argument("run_reference_student: targets must be exact_bcpd or one_hot");
  const auto train = data.indices(SplitTag::Train);
  TargetDistribution t = targets == Provenance::ExactBcpd
                             ? TargetDistribution::soft(data.bcpd)
                             : TargetDistribution::one_hot(data.y, data.num_classes());
  ExperimentRecord rec;
  rec.provenance = targets;
  rec.seed = rng.seed();
  const BcpdDistance d =
      mean_distance_to_bcpd(gather_rows(t.probs(), train), gather_rows(data.bcpd, train));
  rec.mse_to_bcpd = d.mean_mse;
  rec.ce_to_bcpd = d.mean_ce;
  rec.student_test_acc = distill_student(base_cfg, data, t, std::move(rng));
  return rec;
}

std::vector<ExperimentRecord> run_set1(const TrainConfig& base_cfg, const LabeledDataset& data,
                                       std::span<const double> noise_grid, const RngState& rng,
                                       const RunOptions& options) {
  if (noise_grid.empty()) throw std::invalid_argument("run_set1: empty noise grid");
  const auto train = data.indices(SplitTag::Train);
  const Matrix train_bcpd = gather_rows(data.bcpd, train);
  const TargetDistribution base = TargetDistribution::soft(data.bcpd);

  // Common random numbers: every scale perturbs along the same noise draw and
  // trains from the same student initialisation, so records differ only in
  // the noise scale.
  const RngState shared_noise = rng.fork("noise");
  const RngState student_rng = rng.fork("student");
  std::vector<ExperimentRecord> records(noise_grid.size());
  parallel_for(noise_grid.size(), options.jobs, options, [&](std::size_t i) {
    RngState noise_rng = shared_noise;
    const Matrix noisy = perturb_bcpd(noise_rng, train_bcpd, noise_grid[i]);
    TargetDistribution targets = base;
    for (std::size_t k = 0; k < train.size(); ++k) targets.set_soft(train[k], noisy.row(k));

    ExperimentRecord rec;
    rec.run_id = i;
    rec.provenance = Provenance::NoisyBcpd;
    rec.noise_scale = noise_grid[i];
    const BcpdDistance d = mean_distance_to_bcpd(noisy, train_bcpd);
    rec.mse_to_bcpd = d.mean_mse;
    rec.ce_to_bcpd = d.mean_ce;
    rec.seed = student_rng.seed();
    rec.student_test_acc = distill_student(base_cfg, data, targets, student_rng);
    records[i] = rec;
  });
  return records;
}

std::vector<ExperimentRecord> run_set2(const TrainConfig& base_cfg, const LabeledDataset& data,
                                       std::size_t repeats, const RngState& rng,
                                       const RunOptions& options) {
  if (repeats == 0) throw std::invalid_argument("run_set2: repeats must be >= 1");
  const auto train = data.indices(SplitTag::Train);
  const TargetDistribution hard = TargetDistribution::one_hot(data.y, data.num_classes());
  const TargetDistribution soft_base = TargetDistribution::soft(data.bcpd);
  constexpr LossKind kinds[] = {LossKind::CE, LossKind::MSE};

  std::vector<ExperimentRecord> records(2 * repeats);
  parallel_for(records.size(), options.jobs, options, [&](std::size_t i) {
    const LossKind kind = kinds[i / repeats];
    const std::size_t replicate = i % repeats;
    const RngState run = rng.fork(replicate);

    TrainConfig teacher_cfg = base_cfg;
    teacher_cfg.loss_kind = kind;
    const TrainResult teacher = train_model(teacher_cfg, data, hard, run.fork("teacher"));

    ExperimentRecord rec;
    rec.run_id = i;
    rec.provenance = Provenance::Teacher;
    rec.teacher_loss = kind;
    rec.replicate = replicate;
    const BcpdDistance d = evaluate_distance_to_bcpd(teacher.model, data, SplitTag::Test);
    rec.mse_to_bcpd = d.mean_mse;
    rec.ce_to_bcpd = d.mean_ce;
    rec.teacher_test_acc = evaluate_accuracy(teacher.model, data, SplitTag::Test);

    const TargetDistribution targets = teacher_targets(teacher.model, data, train, soft_base);
    const RngState student_rng = run.fork("student");
    rec.seed = student_rng.seed();
    rec.student_test_acc = distill_student(base_cfg, data, targets, student_rng);
    records[i] = rec;
  });
  return records;
}

ExperimentRecord run_semi_supervised(const TrainConfig& base_cfg, const LabeledDataset& data,
                                     double labeled_fraction, LossKind teacher_loss,
                                     const RngState& rng, SemiOptions options) {
  if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0))
    throw std::invalid_argument("run_semi_supervised: labeled_fraction must be in (0, 1]");
  std::vector<std::size_t> train = data.indices(SplitTag::Train);
  RngState pick = rng.fork("labeled");
  for (std::size_t i = train.size(); i > 1; --i) std::swap(train[i - 1], train[pick.uniform_index(i)]);
  const auto n_labeled = std::min(
      train.size(), static_cast<std::size_t>(std::llround(labeled_fraction * static_cast<double>(train.size()))));
  if (n_labeled < base_cfg.batch_size)
    throw std::invalid_argument("run_semi_supervised: labeled subset (" + std::to_string(n_labeled) +
                                ") is smaller than one batch");
  std::vector<std::size_t> labeled(train.begin(), train.begin() + static_cast<std::ptrdiff_t>(n_labeled));
  std::vector<std::size_t> unlabeled(train.begin() + static_cast<std::ptrdiff_t>(n_labeled), train.end());
  std::sort(labeled.begin(), labeled.end());
  std::sort(unlabeled.begin(), unlabeled.end());

  TargetDistribution hard = TargetDistribution::one_hot(data.y, data.num_classes());
  TrainConfig teacher_cfg = base_cfg;
  teacher_cfg.loss_kind = teacher_loss;
  const TrainResult teacher = train_model(teacher_cfg, data, hard, rng.fork("teacher"), labeled);

  ExperimentRecord rec;
  rec.provenance = Provenance::SemiTeacher;
  rec.teacher_loss = teacher_loss;
  rec.labeled_fraction = labeled_fraction;
  const BcpdDistance d = evaluate_distance_to_bcpd(teacher.model, data, SplitTag::Test);
  rec.mse_to_bcpd = d.mean_mse;
  rec.ce_to_bcpd = d.mean_ce;
  rec.teacher_test_acc = evaluate_accuracy(teacher.model, data, SplitTag::Test);

  TargetDistribution targets =
      unlabeled.empty() ? std::move(hard) : teacher_targets(teacher.model, data, unlabeled, std::move(hard));
  if (options.soft_on_labeled) targets = teacher_targets(teacher.model, data, labeled, std::move(targets));

  const RngState student_rng = rng.fork("student");
  rec.seed = student_rng.seed();
  rec.student_test_acc = distill_student(base_cfg, data, targets, student_rng);
  return rec;
}

LabeledDataset make_binary_dataset(const RngState& rng, const BinaryOptions& options) {
  return generate_dataset(rng, 2, options.dim, options.delta_mu, options.sigma, options.num_samples)
      .data;
}

std::vector<ExperimentRecord> run_binary(const TrainConfig& base_cfg, const RngState& rng,
                                         const BinaryOptions& options,
                                         const RunOptions& run_options) {
  const LabeledDataset data = make_binary_dataset(rng, options);
  return run_set2(base_cfg, data, options.repeats, rng.fork("set2"), run_options);
}

} // namespace kdlab
