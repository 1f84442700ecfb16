#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kdlab/losses.hpp"
#include "kdlab/nn_core.hpp"
#include "kdlab/rng.hpp"
#include "kdlab/synth_data.hpp"

namespace kdlab {

struct TrainConfig {
  LossKind loss_kind = LossKind::CE;
  double learning_rate = 5e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  std::size_t hidden_dim = 128;
  std::size_t hidden_layers = 2;

  /// Throws std::invalid_argument on lr < 0, batch 0, epochs 0 or T <= 0.
  void validate() const;
};

struct EpochStats {
  double train_loss = 0.0; ///< mean of the epoch's mini-batch losses
  double val_loss = 0.0;   ///< training loss kind against one-hot val labels
  double val_accuracy = 0.0;
};

using TrainHistory = std::vector<EpochStats>;

struct TrainResult {
  MlpModel model;
  TrainHistory history;
};

/// Plain mini-batch SGD on the train split.
///
/// `rng` initializes the parameters and then drives the per-epoch reshuffle.
/// `targets` is indexed like the dataset; only rows of the train split are
/// read. Validation rows feed the history; test rows are never touched.
TrainResult train_model(const TrainConfig& cfg, const LabeledDataset& data,
                        const TargetDistribution& targets, RngState rng);

/// Same, restricted to `train_rows` (each must be tagged train).
TrainResult train_model(const TrainConfig& cfg, const LabeledDataset& data,
                        const TargetDistribution& targets, RngState rng,
                        std::span<const std::size_t> train_rows);

/// Fraction of `tag` samples whose predicted label matches y.
double evaluate_accuracy(const MlpModel& model, const LabeledDataset& data, SplitTag tag);

struct BcpdDistance {
  double mean_mse = 0.0;
  double mean_ce = 0.0; ///< mean H(p*, estimate)
};

/// Mean mse_distance and ce_distance between the model's probabilities and
/// the stored analytic BCPD on one split.
BcpdDistance evaluate_distance_to_bcpd(const MlpModel& model, const LabeledDataset& data,
                                       SplitTag tag);

/// Mean distances between estimate rows and reference BCPD rows.
BcpdDistance mean_distance_to_bcpd(const Matrix& estimates, const Matrix& bcpd);

enum class Provenance { NoisyBcpd, Teacher, ExactBcpd, OneHot, SemiTeacher };

struct ExperimentRecord {
  std::size_t run_id = 0;
  Provenance provenance = Provenance::Teacher;
  std::optional<double> noise_scale;
  std::optional<LossKind> teacher_loss;
  std::optional<std::size_t> replicate;
  std::optional<double> labeled_fraction; ///< semi-supervised runs only
  double mse_to_bcpd = 0.0;
  double ce_to_bcpd = 0.0;
  std::optional<double> teacher_test_acc;
  double student_test_acc = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const ExperimentRecord&, const ExperimentRecord&) = default;
};

/// "noisy_bcpd", "teacher", "exact_bcpd", "one_hot", or "semi@<fraction>".
std::string provenance_label(const ExperimentRecord& record);

struct RunOptions {
  /// Worker threads for independent records. Records are ordered by grid
  /// index whatever the completion order.
  std::size_t jobs = 1;
  /// Called after each finished record with (finished, total). May be called
  /// from worker threads, one call at a time.
  std::function<void(std::size_t, std::size_t)> progress;
};

/// The teacher's probabilities on the train rows; other rows keep the one-hot
/// labels (they are never read in training).
TargetDistribution teacher_soft_targets(const MlpModel& teacher, const LabeledDataset& data);

/// Student trained with soft-target CE on `targets`, evaluated on test.
/// `provenance` and the distance fields are filled by the caller.
double distill_student(const TrainConfig& base_cfg, const LabeledDataset& data,
                       const TargetDistribution& targets, RngState rng);

/// One record for a student distilled from exact BCPD or one-hot targets.
/// Distances are between the targets and the BCPD on the train split.
ExperimentRecord run_reference_student(const TrainConfig& base_cfg, const LabeledDataset& data,
                                       Provenance targets, RngState rng);

/// Noisy-BCPD students, one per noise scale. All scales share one noise
/// draw and one student seed, so accuracy varies only through the scale.
std::vector<ExperimentRecord> run_set1(const TrainConfig& base_cfg, const LabeledDataset& data,
                                       std::span<const double> noise_grid, const RngState& rng,
                                       const RunOptions& options = {});

/// `repeats` CE teachers and `repeats` MSE teachers, each distilled into a
/// student. Records are ordered CE replicates then MSE replicates; replicate r
/// uses the same teacher and student seeds for both loss kinds.
std::vector<ExperimentRecord> run_set2(const TrainConfig& base_cfg, const LabeledDataset& data,
                                       std::size_t repeats, const RngState& rng,
                                       const RunOptions& options = {});

struct SemiOptions {
  /// Labeled rows get the teacher's soft output instead of the one-hot label.
  bool soft_on_labeled = false;
};

/// Teacher trained on a labeled subset of the train split; its soft outputs
/// pseudo-label the rest; the student learns from both with CE.
ExperimentRecord run_semi_supervised(const TrainConfig& base_cfg, const LabeledDataset& data,
                                     double labeled_fraction, LossKind teacher_loss,
                                     const RngState& rng, SemiOptions options = {});

struct BinaryOptions {
  std::size_t num_samples = 100000;
  std::size_t dim = 30;
  double delta_mu = 1.0;
  double sigma = 4.0;
  std::size_t repeats = 5;
};

/// Two-class dataset built from `rng`, then the teacher comparison protocol.
std::vector<ExperimentRecord> run_binary(const TrainConfig& base_cfg, const RngState& rng,
                                         const BinaryOptions& options = {},
                                         const RunOptions& run_options = {});

/// The dataset run_binary builds for a given rng and options.
LabeledDataset make_binary_dataset(const RngState& rng, const BinaryOptions& options);

} // namespace kdlab
