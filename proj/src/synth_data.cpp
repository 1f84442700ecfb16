#include "kdlab/synth_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace kdlab {

std::string_view to_string(SplitTag tag) {
  switch (tag) {
  case SplitTag::Train: return "train";
  case SplitTag::Val: return "val";
  case SplitTag::Test: return "test";
  }
  return "?";
}

SplitTag parse_split_tag(std::string_view text) {
  if (text == "train") return SplitTag::Train;
  if (text == "val") return SplitTag::Val;
  if (text == "test") return SplitTag::Test;
  throw std::invalid_argument("unknown split tag '" + std::string(text) + "'");
}

std::vector<std::size_t> LabeledDataset::indices(SplitTag tag) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == tag) out.push_back(i);
  return out;
}

std::size_t LabeledDataset::count(SplitTag tag) const {
  return static_cast<std::size_t>(std::count(split.begin(), split.end(), tag));
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), m.cols());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto src = m.row(indices[k]);
    std::copy(src.begin(), src.end(), out.row(k).begin());
  }
  return out;
}

std::vector<int> gather(std::span<const int> v, std::span<const std::size_t> indices) {
  std::vector<int> out(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) out[k] = v[indices[k]];
  return out;
}

GaussianSpec make_spec(RngState& rng, std::size_t num_classes, std::size_t dim, double delta_mu,
                       double sigma) {
  if (num_classes < 2) throw std::invalid_argument("make_spec: need at least 2 classes");
  if (dim < 1) throw std::invalid_argument("make_spec: dim must be positive");
  if (!(delta_mu >= 0.0) || !std::isfinite(delta_mu))
    throw std::invalid_argument("make_spec: delta_mu must be non-negative");
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw std::invalid_argument("make_spec: sigma must be positive");
  GaussianSpec spec{num_classes, dim, delta_mu, sigma, Matrix(num_classes, dim)};
  const std::array<double, 3> symbols{-delta_mu, 0.0, delta_mu};
  for (double& v : spec.means.data()) v = symbols[rng.uniform_index(3)];
  return spec;
}

ProbVector analytic_bcpd(const GaussianSpec& spec, std::span<const double> x) {
  if (x.size() != spec.dim) throw std::invalid_argument("analytic_bcpd: wrong input length");
  std::vector<double> scores(spec.num_classes);
  const double scale = 1.0 / (2.0 * spec.sigma * spec.sigma);
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    const auto mu = spec.means.row(k);
    double dist2 = 0.0;
    for (std::size_t j = 0; j < spec.dim; ++j) {
      const double d = x[j] - mu[j];
      dist2 += d * d;
    }
    scores[k] = -dist2 * scale;
  }
  return softmax(scores);
}

LabeledDataset sample_dataset(RngState& rng, const GaussianSpec& spec, std::size_t n) {
  if (n == 0) throw std::invalid_argument("sample_dataset: N must be positive");
  LabeledDataset data{Matrix(n, spec.dim), std::vector<int>(n), Matrix(n, spec.num_classes),
                      std::vector<SplitTag>(n, SplitTag::Train)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<int>(rng.uniform_index(spec.num_classes));
    data.y[i] = k;
    const auto mu = spec.means.row(static_cast<std::size_t>(k));
    auto row = data.x.row(i);
    for (std::size_t j = 0; j < spec.dim; ++j) row[j] = mu[j] + spec.sigma * rng.normal();
    const ProbVector p = analytic_bcpd(spec, row);
    std::copy(p.values().begin(), p.values().end(), data.bcpd.row(i).begin());
  }
  return data;
}

LabeledDataset split(RngState& rng, LabeledDataset dataset, std::array<double, 3> ratios) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) throw std::invalid_argument("split: ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("split: ratios must sum to 1");

  const std::size_t n = dataset.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_index(i)]);

  const auto boundary = [n](double frac) {
    return std::min(n, static_cast<std::size_t>(std::llround(frac * static_cast<double>(n))));
  };
  const std::size_t end_train = boundary(ratios[0]);
  const std::size_t end_val = std::max(end_train, boundary(ratios[0] + ratios[1]));
  dataset.split.assign(n, SplitTag::Test);
  for (std::size_t k = 0; k < end_train; ++k) dataset.split[perm[k]] = SplitTag::Train;
  for (std::size_t k = end_train; k < end_val; ++k) dataset.split[perm[k]] = SplitTag::Val;
  return dataset;
}

SyntheticData generate_dataset(const RngState& rng, std::size_t num_classes, std::size_t dim,
                               double delta_mu, double sigma, std::size_t n,
                               std::array<double, 3> ratios) {
  RngState spec_rng = rng.fork("spec");
  RngState data_rng = rng.fork("data");
  RngState split_rng = rng.fork("split");
  SyntheticData out;
  out.spec = make_spec(spec_rng, num_classes, dim, delta_mu, sigma);
  out.data = split(split_rng, sample_dataset(data_rng, out.spec, n), ratios);
  return out;
}

Matrix perturb_bcpd(RngState& rng, const Matrix& bcpd, double noise_scale) {
  if (!(noise_scale >= 0.0)) throw std::invalid_argument("perturb_bcpd: noise_scale must be >= 0");
  if (noise_scale == 0.0) return bcpd;
  Matrix out(bcpd.rows(), bcpd.cols());
  std::vector<double> logp(bcpd.cols());
  for (std::size_t i = 0; i < bcpd.rows(); ++i) {
    const auto row = bcpd.row(i);
    for (std::size_t c = 0; c < row.size(); ++c)
      logp[c] = std::log(std::max(row[c], kProbabilityFloor)) + noise_scale * rng.normal();
    softmax_into(logp, out.row(i));
  }
  return out;
}

std::vector<double> log_spaced(std::size_t count, double lo, double hi) {
  if (count == 0) return {};
  if (!(lo > 0.0) || !(hi >= lo)) throw std::invalid_argument("log_spaced: need 0 < lo <= hi");
  if (count == 1) return {lo};
  std::vector<double> out(count);
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (std::size_t i = 0; i < count; ++i)
    out[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  return out;
}

double bayes_accuracy(const LabeledDataset& data, SplitTag tag) {
  std::size_t total = 0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.split[i] != tag) continue;
    ++total;
    const auto row = data.bcpd.row(i);
    const auto best = std::max_element(row.begin(), row.end()) - row.begin();
    if (best == data.y[i]) ++hits;
  }
  if (total == 0) throw std::invalid_argument("bayes_accuracy: empty split");
  return static_cast<double>(hits) / static_cast<double>(total);
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

void write_dataset_csv(const LabeledDataset& data, std::ostream& out) {
  const std::size_t d = data.dim();
  const std::size_t c = data.num_classes();
  for (std::size_t j = 0; j < d; ++j) out << "x_" << j << ',';
  out << 'y';
  for (std::size_t k = 0; k < c; ++k) out << ",p_" << k;
  out << ",split\n";
  std::string line;
  for (std::size_t i = 0; i < data.size(); ++i) {
    line.clear();
    for (double v : data.x.row(i)) {
      line += format_double(v);
      line += ',';
    }
    line += std::to_string(data.y[i]);
    for (double v : data.bcpd.row(i)) {
      line += ',';
      line += format_double(v);
    }
    line += ',';
    line += to_string(data.split[i]);
    line += '\n';
    out << line;
  }
  if (!out) throw std::runtime_error("write_dataset_csv: write failed");
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    fields.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line_no) {
  T value{};
  const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size())
    throw std::runtime_error("dataset CSV line " + std::to_string(line_no) + ": bad number '" +
                             std::string(field) + "'");
  return value;
}

} // namespace

LabeledDataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset CSV: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);
  std::size_t d = 0;
  while (d < header.size() && header[d].starts_with("x_")) ++d;
  if (d == 0 || d >= header.size() || header[d] != "y")
    throw std::runtime_error("dataset CSV line 1: unexpected header");
  std::size_t c = 0;
  while (d + 1 + c < header.size() && header[d + 1 + c].starts_with("p_")) ++c;
  if (c < 2 || d + 1 + c + 1 != header.size() || header.back() != "split")
    throw std::runtime_error("dataset CSV line 1: unexpected header");

  std::vector<double> xs, ps;
  std::vector<int> ys;
  std::vector<SplitTag> tags;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size())
      throw std::runtime_error("dataset CSV line " + std::to_string(line_no) +
                               ": expected " + std::to_string(header.size()) + " fields");
    for (std::size_t j = 0; j < d; ++j) xs.push_back(parse_number<double>(fields[j], line_no));
    const int label = parse_number<int>(fields[d], line_no);
    if (label < 0 || static_cast<std::size_t>(label) >= c)
      throw std::runtime_error("dataset CSV line " + std::to_string(line_no) + ": label out of range");
    ys.push_back(label);
    for (std::size_t k = 0; k < c; ++k) ps.push_back(parse_number<double>(fields[d + 1 + k], line_no));
    try {
      tags.push_back(parse_split_tag(fields.back()));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error("dataset CSV line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  const std::size_t n = ys.size();
  if (n == 0) throw std::runtime_error("dataset CSV: no rows");
  return LabeledDataset{Matrix(n, d, std::move(xs)), std::move(ys), Matrix(n, c, std::move(ps)),
                        std::move(tags)};
}

void write_dataset_csv(const LabeledDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_dataset_csv(data, out);
}

LabeledDataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_dataset_csv(in);
}

nlohmann::json dataset_metadata(const GaussianSpec& spec, const LabeledDataset& data,
                                std::uint64_t seed) {
  nlohmann::json means = nlohmann::json::array();
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    const auto row = spec.means.row(k);
    means.push_back(std::vector<double>(row.begin(), row.end()));
  }
  nlohmann::json bayes = nlohmann::json::object();
  nlohmann::json sizes = nlohmann::json::object();
  for (SplitTag tag : {SplitTag::Train, SplitTag::Val, SplitTag::Test}) {
    const std::size_t n = data.count(tag);
    sizes[std::string(to_string(tag))] = n;
    if (n > 0) bayes[std::string(to_string(tag))] = bayes_accuracy(data, tag);
  }
  return nlohmann::json{
      {"num_classes", spec.num_classes},
      {"dim", spec.dim},
      {"delta_mu", spec.delta_mu},
      {"sigma", spec.sigma},
      {"means", means},
      {"seed", seed},
      {"num_samples", data.size()},
      {"split_sizes", sizes},
      {"bayes_accuracy", bayes},
  };
}

} // namespace kdlab
