#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kdlab/rng.hpp"
#include "kdlab/tensor_math.hpp"

namespace kdlab {

/// Class-conditional Gaussians N(mu_k, sigma^2 I) with uniform class prior.
struct GaussianSpec {
  std::size_t num_classes = 3;
  std::size_t dim = 30;
  double delta_mu = 1.0;
  double sigma = 4.0;
  Matrix means; ///< num_classes x dim, entries in {-delta_mu, 0, delta_mu}
};

enum class SplitTag : std::uint8_t { Train, Val, Test };

std::string_view to_string(SplitTag tag);
SplitTag parse_split_tag(std::string_view text);

struct LabeledDataset {
  Matrix x;                    ///< N x d
  std::vector<int> y;          ///< N labels
  Matrix bcpd;                 ///< N x C, analytic posterior per sample
  std::vector<SplitTag> split; ///< N tags

  std::size_t size() const { return y.size(); }
  std::size_t dim() const { return x.cols(); }
  std::size_t num_classes() const { return bcpd.cols(); }

  /// Sample indices carrying `tag`, ascending.
  std::vector<std::size_t> indices(SplitTag tag) const;
  std::size_t count(SplitTag tag) const;
};

/// Rows of `m` at `indices`, in that order.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices);
std::vector<int> gather(std::span<const int> v, std::span<const std::size_t> indices);

/// Mean entries drawn uniformly from {-delta_mu, 0, delta_mu}.
GaussianSpec make_spec(RngState& rng, std::size_t num_classes, std::size_t dim, double delta_mu,
                       double sigma);

/// y ~ U[C], x | y ~ N(mu_y, sigma^2 I), bcpd from analytic_bcpd. Every sample
/// is tagged Train until split() is applied.
LabeledDataset sample_dataset(RngState& rng, const GaussianSpec& spec, std::size_t n);

/// softmax_k of s_k = -||x - mu_k||^2 / (2 sigma^2).
ProbVector analytic_bcpd(const GaussianSpec& spec, std::span<const double> x);

/// Tags a uniformly random permutation as train/val/test by cumulative ratio
/// boundaries round(N * r0), round(N * (r0 + r1)).
LabeledDataset split(RngState& rng, LabeledDataset dataset, std::array<double, 3> ratios);

inline constexpr std::array<double, 3> kDefaultSplit{0.9, 0.05, 0.05};

inline constexpr double kProbabilityFloor = 1e-12;

struct SyntheticData {
  GaussianSpec spec;
  LabeledDataset data;
};

/// make_spec, sample_dataset and split driven by the "spec", "data" and
/// "split" sub-streams of `rng`.
SyntheticData generate_dataset(const RngState& rng, std::size_t num_classes, std::size_t dim,
                               double delta_mu, double sigma, std::size_t n,
                               std::array<double, 3> ratios = kDefaultSplit);

/// Per row: softmax(log(max(p, 1e-12)) + N(0, noise_scale^2) per entry).
/// noise_scale == 0 returns the input unchanged.
Matrix perturb_bcpd(RngState& rng, const Matrix& bcpd, double noise_scale);

/// `count` scales log-spaced on [lo, hi] (both ends included).
std::vector<double> log_spaced(std::size_t count, double lo, double hi);

/// Accuracy of argmax(bcpd) against the labels on one split.
double bayes_accuracy(const LabeledDataset& data, SplitTag tag);

// Dataset CSV: header x_0..x_{d-1},y,p_0..p_{C-1},split; doubles with 17
// significant digits.
void write_dataset_csv(const LabeledDataset& data, std::ostream& out);
LabeledDataset read_dataset_csv(std::istream& in);
void write_dataset_csv(const LabeledDataset& data, const std::filesystem::path& path);
LabeledDataset read_dataset_csv(const std::filesystem::path& path);

/// Sidecar written next to the CSV.
nlohmann::json dataset_metadata(const GaussianSpec& spec, const LabeledDataset& data,
                                std::uint64_t seed);

/// Shortest decimal-exact text form for a double (17 significant digits).
std::string format_double(double v);

} // namespace kdlab
