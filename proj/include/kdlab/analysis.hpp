#pragma once

#include <iosfwd>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kdlab/distill_lab.hpp"

namespace kdlab {

struct Correlation {
  double pearson = 0.0;
  double spearman = 0.0;
};

/// Pearson on the values, Spearman on average ranks (ties share the mean rank).
/// Throws std::invalid_argument for fewer than 3 points or zero variance.
Correlation correlation(std::span<const double> x, std::span<const double> y);

enum class RecordField { NoiseScale, MseToBcpd, CeToBcpd, TeacherTestAcc, StudentTestAcc };

RecordField parse_record_field(std::string_view name);
std::string_view to_string(RecordField field);

/// Values of one numeric field; throws if a record lacks an optional field.
std::vector<double> field_values(std::span<const ExperimentRecord> records, RecordField field);

Correlation correlation(std::span<const ExperimentRecord> records, RecordField x_field,
                        RecordField y_field);

/// Average ranks (1-based), ties receive the mean of their positions.
std::vector<double> average_ranks(std::span<const double> v);

double mean(std::span<const double> v);
/// Unbiased sample variance.
double sample_variance(std::span<const double> v);

struct WelchResult {
  double t = 0.0;
  double dof = 0.0;
  double p_one_sided = 1.0; ///< P(T >= t) under H0: mean(a) <= mean(b)
};

/// One-sided Welch t-test of mean(a) > mean(b). Needs >= 2 values per group.
WelchResult welch_greater(std::span<const double> a, std::span<const double> b);

/// Records whose provenance is Teacher/SemiTeacher with the given loss.
std::vector<ExperimentRecord> filter_teacher(std::span<const ExperimentRecord> records,
                                             LossKind kind);

// Results CSV. Comment lines start with '#'; the column header is
//   run_id,provenance,noise_scale,teacher_loss,replicate,mse_to_bcpd,
//   ce_to_bcpd,teacher_test_acc,student_test_acc,seed
// with empty cells for absent optional values.
inline constexpr std::string_view kResultsHeader =
    "run_id,provenance,noise_scale,teacher_loss,replicate,mse_to_bcpd,ce_to_bcpd,"
    "teacher_test_acc,student_test_acc,seed";

void write_results_csv(std::span<const ExperimentRecord> records,
                       std::span<const std::string> comments, std::ostream& out);
void write_results_csv(std::span<const ExperimentRecord> records,
                       std::span<const std::string> comments, const std::filesystem::path& path);
std::string format_record(const ExperimentRecord& record);

/// Throws std::runtime_error naming the 1-based line number on malformed input.
std::vector<ExperimentRecord> read_results_csv(std::istream& in);
std::vector<ExperimentRecord> read_results_csv(const std::filesystem::path& path);

} // namespace kdlab
