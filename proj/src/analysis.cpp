#include "kdlab/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

namespace kdlab {

double mean(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("mean: empty input");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v) {
  if (v.size() < 2) throw std::invalid_argument("sample_variance: need at least 2 values");
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

namespace {

double pearson(std::span<const double> x, std::span<const double> y) {
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("correlation: zero variance");
  return sxy / std::sqrt(sxx * syy);
}

} // namespace

Correlation correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("correlation: length mismatch");
  if (x.size() < 3) throw std::invalid_argument("correlation: need at least 3 points");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return {pearson(x, y), pearson(rx, ry)};
}

RecordField parse_record_field(std::string_view name) {
  if (name == "noise_scale") return RecordField::NoiseScale;
  if (name == "mse_to_bcpd") return RecordField::MseToBcpd;
  if (name == "ce_to_bcpd") return RecordField::CeToBcpd;
  if (name == "teacher_test_acc") return RecordField::TeacherTestAcc;
  if (name == "student_test_acc") return RecordField::StudentTestAcc;
  throw std::invalid_argument("unknown record field '" + std::string(name) + "'");
}

std::string_view to_string(RecordField field) {
  switch (field) {
  case RecordField::NoiseScale: return "noise_scale";
  case RecordField::MseToBcpd: return "mse_to_bcpd";
  case RecordField::CeToBcpd: return "ce_to_bcpd";
  case RecordField::TeacherTestAcc: return "teacher_test_acc";
  case RecordField::StudentTestAcc: return "student_test_acc";
  }
  return "?";
}

std::vector<double> field_values(std::span<const ExperimentRecord> records, RecordField field) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    std::optional<double> v;
    switch (field) {
    case RecordField::NoiseScale: v = r.noise_scale; break;
    case RecordField::MseToBcpd: v = r.mse_to_bcpd; break;
    case RecordField::CeToBcpd: v = r.ce_to_bcpd; break;
    case RecordField::TeacherTestAcc: v = r.teacher_test_acc; break;
    case RecordField::StudentTestAcc: v = r.student_test_acc; break;
    }
    if (!v) throw std::invalid_argument("record " + std::to_string(r.run_id) + " has no " +
                                        std::string(to_string(field)));
    out.push_back(*v);
  }
  return out;
}

Correlation correlation(std::span<const ExperimentRecord> records, RecordField x_field,
                        RecordField y_field) {
  const auto x = field_values(records, x_field);
  const auto y = field_values(records, y_field);
  return correlation(x, y);
}

WelchResult welch_greater(std::span<const double> a, std::span<const double> b) {
  const double va = sample_variance(a) / static_cast<double>(a.size());
  const double vb = sample_variance(b) / static_cast<double>(b.size());
  const double diff = mean(a) - mean(b);
  WelchResult r;
  if (va + vb == 0.0) {
    r.t = diff > 0 ? INFINITY : (diff < 0 ? -INFINITY : 0.0);
    r.dof = static_cast<double>(a.size() + b.size() - 2);
    r.p_one_sided = diff > 0 ? 0.0 : (diff < 0 ? 1.0 : 0.5);
    return r;
  }
  r.t = diff / std::sqrt(va + vb);
  r.dof = (va + vb) * (va + vb) /
          (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  const boost::math::students_t dist(r.dof);
  r.p_one_sided = boost::math::cdf(boost::math::complement(dist, r.t));
  return r;
}

std::vector<ExperimentRecord> filter_teacher(std::span<const ExperimentRecord> records,
                                             LossKind kind) {
  std::vector<ExperimentRecord> out;
  for (const auto& r : records)
    if (r.teacher_loss == kind) out.push_back(r);
  return out;
}

std::string format_record(const ExperimentRecord& r) {
  std::string line = std::to_string(r.run_id);
  line += ',';
  line += provenance_label(r);
  line += ',';
  if (r.noise_scale) line += format_double(*r.noise_scale);
  line += ',';
  if (r.teacher_loss) line += to_string(*r.teacher_loss);
  line += ',';
  if (r.replicate) line += std::to_string(*r.replicate);
  line += ',';
  line += format_double(r.mse_to_bcpd);
  line += ',';
  line += format_double(r.ce_to_bcpd);
  line += ',';
  if (r.teacher_test_acc) line += format_double(*r.teacher_test_acc);
  line += ',';
  line += format_double(r.student_test_acc);
  line += ',';
  line += std::to_string(r.seed);
  return line;
}

void write_results_csv(std::span<const ExperimentRecord> records,
                       std::span<const std::string> comments, std::ostream& out) {
  for (const auto& c : comments) out << "# " << c << '\n';
  out << kResultsHeader << '\n';
  for (const auto& r : records) out << format_record(r) << '\n';
  if (!out) throw std::runtime_error("write_results_csv: write failed");
}

void write_results_csv(std::span<const ExperimentRecord> records,
                       std::span<const std::string> comments, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_results_csv(records, comments, out);
}

namespace {

struct LineError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename T>
T parse_field(std::string_view f, std::string_view what) {
  T value{};
  const auto res = std::from_chars(f.data(), f.data() + f.size(), value);
  if (f.empty() || res.ec != std::errc{} || res.ptr != f.data() + f.size())
    throw LineError("bad " + std::string(what) + " '" + std::string(f) + "'");
  return value;
}

template <typename T>
std::optional<T> parse_optional(std::string_view f, std::string_view what) {
  if (f.empty()) return std::nullopt;
  return parse_field<T>(f, what);
}

ExperimentRecord parse_record(std::string_view line) {
  std::vector<std::string_view> f;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    f.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  if (f.size() != 10) throw LineError("expected 10 fields, got " + std::to_string(f.size()));
  ExperimentRecord r;
  r.run_id = parse_field<std::size_t>(f[0], "run_id");
  const std::string_view prov = f[1];
  if (prov == "noisy_bcpd") r.provenance = Provenance::NoisyBcpd;
  else if (prov == "teacher") r.provenance = Provenance::Teacher;
  else if (prov == "exact_bcpd") r.provenance = Provenance::ExactBcpd;
  else if (prov == "one_hot") r.provenance = Provenance::OneHot;
  else if (prov.starts_with("semi@")) {
    r.provenance = Provenance::SemiTeacher;
    r.labeled_fraction = parse_field<double>(prov.substr(5), "labeled fraction");
  } else {
    throw LineError("unknown provenance '" + std::string(prov) + "'");
  }
  r.noise_scale = parse_optional<double>(f[2], "noise_scale");
  if (!f[3].empty()) {
    try {
      r.teacher_loss = parse_loss_kind(f[3]);
    } catch (const std::invalid_argument& e) {
      throw LineError(e.what());
    }
  }
  r.replicate = parse_optional<std::size_t>(f[4], "replicate");
  r.mse_to_bcpd = parse_field<double>(f[5], "mse_to_bcpd");
  r.ce_to_bcpd = parse_field<double>(f[6], "ce_to_bcpd");
  r.teacher_test_acc = parse_optional<double>(f[7], "teacher_test_acc");
  r.student_test_acc = parse_field<double>(f[8], "student_test_acc");
  r.seed = parse_field<std::uint64_t>(f[9], "seed");
  return r;
}

} // namespace

std::vector<ExperimentRecord> read_results_csv(std::istream& in) {
  std::vector<ExperimentRecord> records;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      if (line != kResultsHeader)
        throw std::runtime_error("results CSV line " + std::to_string(line_no) + ": unexpected header");
      header_seen = true;
      continue;
    }
    try {
      records.push_back(parse_record(line));
    } catch (const LineError& e) {
      throw std::runtime_error("results CSV line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!header_seen) throw std::runtime_error("results CSV: missing header");
  return records;
}

std::vector<ExperimentRecord> read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_results_csv(in);
}

} // namespace kdlab
