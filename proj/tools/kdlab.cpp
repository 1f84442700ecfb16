// kdlab: dataset generation, teacher training, distillation, experiment
// sweeps and analysis for the synthetic Gaussian distillation lab.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kdlab/analysis.hpp"

namespace fs = std::filesystem;
using namespace kdlab;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = KDLAB_VERSION;
constexpr std::size_t kFullSamples = 100000;
constexpr std::size_t kFastSamples = 20000;
// Slack allowed above the Bayes accuracy on a test split of n rows: three
// binomial standard deviations at p = 1/2, never below 2 points (the value it
// takes at n = 5000).
double bayes_slack(std::size_t n) {
  return std::max(0.02, 1.5 / std::sqrt(static_cast<double>(n)));
}

// Raised when the run completed but an output failed a sanity check.
struct InvariantError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GlobalFlags {
  std::uint64_t seed = 0;
  bool fast = false;
  std::size_t jobs = 1;
};

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write to " + path.string() + " failed");
}

fs::path sibling(const fs::path& path, const std::string& suffix) {
  fs::path p = path;
  p.replace_extension(suffix);
  return p;
}

fs::path metadata_path(const fs::path& data) { return sibling(data, ".meta.json"); }

std::string metadata_digest(const json& meta) { return hex64(tag_hash(meta.dump())); }

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Global settings plus those of the subcommand that ran, one "key=value" per line.
std::string resolved_config(const CLI::App& root, const std::string& subcommand) {
  std::istringstream all(root.config_to_str(true, false));
  std::string out, line;
  while (std::getline(all, line)) {
    const std::string key = line.substr(0, line.find('='));
    if (key.find('.') == std::string::npos || key.starts_with(subcommand + ".")) out += line + "\n";
  }
  return out;
}

// Written before any heavy work starts; the only file carrying a timestamp.
void write_manifest(const CLI::App& root, const std::string& command, const GlobalFlags& g,
                    const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs,
                    const std::string& dataset_digest) {
  json manifest{
      {"command", command},
      {"tool_version", kToolVersion},
      {"seed", g.seed},
      {"fast", g.fast},
      {"jobs", g.jobs},
      {"resolved_config", resolved_config(root, command.substr(0, command.find(' ')))},
      {"inputs", json::array()},
      {"outputs", json::array()},
      {"dataset_metadata_digest", dataset_digest},
      {"created_utc", utc_timestamp()},
  };
  for (const auto& p : inputs) manifest["inputs"].push_back(p.string());
  for (const auto& p : outputs) manifest["outputs"].push_back(p.string());
  write_text(sibling(outputs.front(), ".manifest.json"), manifest.dump(2) + "\n");
}

struct LoadedData {
  LabeledDataset data;
  std::string digest = "none";
};

LoadedData load_data(const fs::path& path) {
  LoadedData out;
  out.data = read_dataset_csv(path);
  const fs::path meta = metadata_path(path);
  if (fs::exists(meta)) out.digest = metadata_digest(json::parse(read_text(meta)));
  return out;
}

void add_train_flags(CLI::App* sub, TrainConfig& cfg) {
  sub->add_option("--lr", cfg.learning_rate, "SGD learning rate")->check(CLI::NonNegativeNumber);
  sub->add_option("--batch", cfg.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
  sub->add_option("--epochs", cfg.epochs, "Training epochs")->check(CLI::PositiveNumber);
  sub->add_option("--hidden", cfg.hidden_dim, "Hidden layer width")->check(CLI::PositiveNumber);
  sub->add_option("--hidden-layers", cfg.hidden_layers, "Number of hidden layers");
  sub->add_option("--temperature", cfg.temperature, "Distillation temperature (soft targets only)")
      ->check(CLI::PositiveNumber);
}

std::vector<std::string> convention_comments(const std::string& what, const GlobalFlags& g,
                                             const TrainConfig& cfg, const std::string& distance_split) {
  std::ostringstream train;
  train << "train: plain SGD lr=" << format_double(cfg.learning_rate) << " batch=" << cfg.batch_size
        << " epochs=" << cfg.epochs << " hidden=" << cfg.hidden_layers << "x" << cfg.hidden_dim
        << "; final-epoch model";
  return {
      "kdlab " + std::string(kToolVersion) + " " + what,
      "seed: " + std::to_string(g.seed),
      "mse_to_bcpd: mean over rows of sum_c (p*_c - q_c)^2",
      "ce_to_bcpd: mean over rows of -sum_c p*_c ln max(q_c, 1e-12)",
      "distances computed on the " + distance_split + " split",
      "student: soft-target cross-entropy, temperature=" + format_double(cfg.temperature),
      train.str(),
  };
}

// Accuracies in [0, 1], distances non-negative, students not above Bayes + slack.
void check_records(std::span<const ExperimentRecord> records, const LabeledDataset& data) {
  const double bayes_test = bayes_accuracy(data, SplitTag::Test);
  const double slack = bayes_slack(data.count(SplitTag::Test));
  for (const auto& r : records) {
    const std::string id = "record " + std::to_string(r.run_id);
    if (!(r.mse_to_bcpd >= 0.0) || !(r.ce_to_bcpd >= 0.0))
      throw InvariantError(id + ": negative or NaN distance");
    if (!(r.student_test_acc >= 0.0 && r.student_test_acc <= 1.0))
      throw InvariantError(id + ": accuracy outside [0, 1]");
    if (r.student_test_acc > bayes_test + slack)
      throw InvariantError(id + ": student accuracy " + format_double(r.student_test_acc) +
                           " exceeds Bayes accuracy " + format_double(bayes_test) + " by more than " +
                           format_double(slack));
  }
}

RunOptions progress_options(const GlobalFlags& g, const std::string& label) {
  RunOptions opt;
  opt.jobs = g.jobs;
  opt.progress = [label](std::size_t done, std::size_t total) {
    std::cerr << "[" << label << "] " << done << "/" << total << "\n";
  };
  return opt;
}

struct KindSummary {
  std::vector<double> student, teacher, mse;
};

std::map<LossKind, KindSummary> summarize_by_kind(std::span<const ExperimentRecord> records) {
  std::map<LossKind, KindSummary> out;
  for (const auto& r : records) {
    if (!r.teacher_loss) continue;
    auto& s = out[*r.teacher_loss];
    s.student.push_back(r.student_test_acc);
    if (r.teacher_test_acc) s.teacher.push_back(*r.teacher_test_acc);
    s.mse.push_back(r.mse_to_bcpd);
  }
  return out;
}

void print_teacher_summary(std::span<const ExperimentRecord> records) {
  auto by_kind = summarize_by_kind(records);
  for (LossKind k : {LossKind::CE, LossKind::MSE}) {
    const auto& s = by_kind[k];
    if (s.student.empty()) continue;
    std::printf("%-3s teachers: n=%zu  teacher_acc=%.4f  mse_to_bcpd=%.5f  student_acc=%.4f\n",
                std::string(to_string(k)).c_str(), s.student.size(), mean(s.teacher), mean(s.mse),
                mean(s.student));
  }
  const auto& ce = by_kind[LossKind::CE].student;
  const auto& mse = by_kind[LossKind::MSE].student;
  if (ce.size() >= 2 && mse.size() >= 2) {
    const WelchResult w = welch_greater(mse, ce);
    std::printf("Welch (student acc, MSE > CE): t=%.3f dof=%.2f p=%.4g\n", w.t, w.dof, w.p_one_sided);
  }
}

void print_set1_summary(std::span<const ExperimentRecord> records) {
  if (records.size() < 3) return;
  const Correlation m = correlation(records, RecordField::MseToBcpd, RecordField::StudentTestAcc);
  const Correlation c = correlation(records, RecordField::CeToBcpd, RecordField::StudentTestAcc);
  std::printf("accuracy vs mse_to_bcpd: pearson=%.4f spearman=%.4f\n", m.pearson, m.spearman);
  std::printf("accuracy vs ce_to_bcpd:  pearson=%.4f spearman=%.4f\n", c.pearson, c.spearman);
}

void print_semi_summary(std::span<const ExperimentRecord> records) {
  std::map<double, std::map<LossKind, std::vector<double>>> acc;
  for (const auto& r : records)
    if (r.labeled_fraction && r.teacher_loss) acc[*r.labeled_fraction][*r.teacher_loss].push_back(r.student_test_acc);
  for (auto& [frac, kinds] : acc) {
    auto& ce = kinds[LossKind::CE];
    auto& ms = kinds[LossKind::MSE];
    if (ce.empty() || ms.empty()) continue;
    std::printf("labeled %.4g: student_acc CE=%.4f MSE=%.4f (n=%zu)\n", frac, mean(ce), mean(ms), ce.size());
  }
}

void write_dat(const fs::path& path, const std::string& header,
               const std::vector<std::pair<double, double>>& rows) {
  std::ostringstream out;
  out << "# " << header << "\n";
  for (const auto& [x, y] : rows) out << format_double(x) << ' ' << format_double(y) << '\n';
  write_text(path, out.str());
}

// ---------------------------------------------------------------- commands

struct GenDataFlags {
  fs::path out = "data.csv";
  std::size_t samples = 0; // 0: profile default
  std::size_t classes = 3;
  std::size_t dim = 30;
  double sigma = 4.0;
  double delta_mu = 1.0;
  std::vector<double> ratios{0.9, 0.05, 0.05};
};

int cmd_gen_data(const CLI::App& root, const GlobalFlags& g, const GenDataFlags& f) {
  if (f.ratios.size() != 3) throw std::invalid_argument("--split needs three ratios");
  const std::size_t n = f.samples ? f.samples : (g.fast ? kFastSamples : kFullSamples);
  write_manifest(root, "gen-data", g, {}, {f.out, metadata_path(f.out)}, "pending");
  const SyntheticData s = generate_dataset(RngState(g.seed), f.classes, f.dim, f.delta_mu, f.sigma, n,
                                           {f.ratios[0], f.ratios[1], f.ratios[2]});
  write_dataset_csv(s.data, f.out);
  const json meta = dataset_metadata(s.spec, s.data, g.seed);
  write_text(metadata_path(f.out), meta.dump(2) + "\n");
  std::printf("wrote %s (%zu samples, %zu classes, dim %zu)\n", f.out.string().c_str(), n, f.classes,
              f.dim);
  for (SplitTag tag : {SplitTag::Train, SplitTag::Val, SplitTag::Test})
    if (s.data.count(tag) > 0)
      std::printf("bayes accuracy %-5s %.4f\n", std::string(to_string(tag)).c_str(),
                  bayes_accuracy(s.data, tag));
  std::printf("metadata digest %s\n", metadata_digest(meta).c_str());
  return 0;
}

struct TeacherFlags {
  fs::path data = "data.csv";
  fs::path out = "teacher.bin";
  fs::path history;
  std::string loss = "ce";
};

int cmd_train_teacher(const CLI::App& root, const GlobalFlags& g, TrainConfig cfg, const TeacherFlags& f) {
  cfg.loss_kind = parse_loss_kind(f.loss);
  cfg.seed = g.seed;
  cfg.validate();
  const fs::path history = f.history.empty() ? sibling(f.out, ".history.csv") : f.history;
  const LoadedData in = load_data(f.data);
  write_manifest(root, "train-teacher", g, {f.data}, {f.out, history}, in.digest);

  const TrainResult r =
      train_model(cfg, in.data, TargetDistribution::one_hot(in.data.y, in.data.num_classes()),
                  RngState(g.seed).fork("teacher"));
  save_model(r.model, f.out);
  std::ostringstream h;
  h << "epoch,train_loss,val_loss,val_accuracy\n";
  for (std::size_t e = 0; e < r.history.size(); ++e)
    h << e + 1 << ',' << format_double(r.history[e].train_loss) << ','
      << format_double(r.history[e].val_loss) << ',' << format_double(r.history[e].val_accuracy) << '\n';
  write_text(history, h.str());

  const double acc = evaluate_accuracy(r.model, in.data, SplitTag::Test);
  const BcpdDistance d = evaluate_distance_to_bcpd(r.model, in.data, SplitTag::Test);
  std::printf("%s teacher: test_acc=%.4f bayes_acc=%.4f mse_to_bcpd=%.6f ce_to_bcpd=%.6f\n",
              f.loss.c_str(), acc, bayes_accuracy(in.data, SplitTag::Test), d.mean_mse, d.mean_ce);
  return 0;
}

struct DistillFlags {
  fs::path data = "data.csv";
  fs::path teacher;
  std::string targets = "teacher";
  std::string teacher_loss;
  fs::path out = "distill.csv";
  std::size_t run_id = 0;
};

int cmd_distill(const CLI::App& root, const GlobalFlags& g, TrainConfig cfg, const DistillFlags& f) {
  cfg.seed = g.seed;
  cfg.validate();
  if (f.targets == "teacher" && f.teacher.empty())
    throw std::invalid_argument("--targets teacher needs --teacher <checkpoint>");
  std::vector<fs::path> inputs{f.data};
  if (f.targets == "teacher") inputs.push_back(f.teacher);
  const LoadedData in = load_data(f.data);
  const LabeledDataset& data = in.data;
  write_manifest(root, "distill", g, inputs, {f.out}, in.digest);

  const RngState student_rng = RngState(g.seed).fork("student");
  ExperimentRecord rec;
  std::string distance_split = "train";
  if (f.targets == "teacher") {
    const MlpModel teacher = load_model(f.teacher);
    rec.provenance = Provenance::Teacher;
    if (!f.teacher_loss.empty()) rec.teacher_loss = parse_loss_kind(f.teacher_loss);
    const BcpdDistance d = evaluate_distance_to_bcpd(teacher, data, SplitTag::Test);
    rec.mse_to_bcpd = d.mean_mse;
    rec.ce_to_bcpd = d.mean_ce;
    rec.teacher_test_acc = evaluate_accuracy(teacher, data, SplitTag::Test);
    rec.seed = student_rng.seed();
    rec.student_test_acc = distill_student(cfg, data, teacher_soft_targets(teacher, data), student_rng);
    distance_split = "test";
  } else {
    rec = run_reference_student(cfg, data, f.targets == "exact-bcpd" ? Provenance::ExactBcpd : Provenance::OneHot,
                                student_rng);
  }
  rec.run_id = f.run_id;
  check_records(std::span(&rec, 1), data);

  if (!fs::exists(f.out) || fs::file_size(f.out) == 0) {
    write_results_csv(std::span(&rec, 1), convention_comments("distill", g, cfg, distance_split), f.out);
  } else {
    std::ofstream out(f.out, std::ios::binary | std::ios::app);
    out << format_record(rec) << '\n';
    if (!out) throw std::runtime_error("append to " + f.out.string() + " failed");
  }
  std::printf("%s\n", format_record(rec).c_str());
  return 0;
}

struct SweepFlags {
  std::string kind;
  fs::path data = "data.csv";
  fs::path out;
  std::size_t scales = 100;
  double min_scale = 0.02;
  double max_scale = 3.0;
  std::size_t repeats = 0; // 0: 10 for set2, 5 for binary
  std::vector<double> fractions{0.01, 0.02, 0.04, 0.08};
  std::size_t semi_seeds = 3;
  bool soft_on_labeled = false;
  std::size_t binary_samples = 0; // 0: profile default
};

int cmd_sweep(const CLI::App& root, const GlobalFlags& g, TrainConfig cfg, const SweepFlags& f) {
  cfg.seed = g.seed;
  cfg.validate();
  const fs::path out = f.out.empty() ? fs::path("results_" + f.kind + ".csv") : f.out;
  const RngState rng(g.seed);
  std::vector<ExperimentRecord> records;
  LabeledDataset data;
  std::string distance_split = "test";

  if (f.kind == "binary") {
    BinaryOptions opt;
    opt.num_samples = f.binary_samples ? f.binary_samples : (g.fast ? kFastSamples : kFullSamples);
    opt.repeats = f.repeats ? f.repeats : 5;
    const RngState binary_rng = rng.fork("binary");
    const SyntheticData s =
        generate_dataset(binary_rng, 2, opt.dim, opt.delta_mu, opt.sigma, opt.num_samples);
    write_manifest(root, "sweep binary", g, {}, {out},
                   metadata_digest(dataset_metadata(s.spec, s.data, g.seed)));
    data = s.data;
    records = run_binary(cfg, binary_rng, opt, progress_options(g, "binary"));
  } else {
    LoadedData in = load_data(f.data);
    data = std::move(in.data);
    write_manifest(root, "sweep " + f.kind, g, {f.data}, {out}, in.digest);
    if (f.kind == "set1") {
      distance_split = "train";
      records = run_set1(cfg, data, log_spaced(f.scales, f.min_scale, f.max_scale), rng.fork("set1"),
                         progress_options(g, "set1"));
    } else if (f.kind == "set2") {
      records = run_set2(cfg, data, f.repeats ? f.repeats : 10, rng.fork("set2"), progress_options(g, "set2"));
    } else {
      // Both teacher kinds share the run stream of a (fraction, seed) cell.
      const RngState semi = rng.fork("semi");
      std::size_t done = 0;
      const std::size_t total = f.fractions.size() * f.semi_seeds * 2;
      for (std::size_t fi = 0; fi < f.fractions.size(); ++fi)
        for (std::size_t s = 0; s < f.semi_seeds; ++s)
          for (LossKind kind : {LossKind::CE, LossKind::MSE}) {
            ExperimentRecord r = run_semi_supervised(cfg, data, f.fractions[fi], kind, semi.fork(fi).fork(s),
                                                     {.soft_on_labeled = f.soft_on_labeled});
            r.run_id = records.size();
            r.replicate = s;
            records.push_back(r);
            std::cerr << "[semi] " << ++done << "/" << total << "\n";
          }
    }
  }

  write_results_csv(records, convention_comments("sweep " + f.kind, g, cfg, distance_split), out);
  std::printf("wrote %s (%zu records)\n", out.string().c_str(), records.size());
  if (f.kind == "set1") print_set1_summary(records);
  else if (f.kind == "semi") print_semi_summary(records);
  else print_teacher_summary(records);
  check_records(records, data);
  return 0;
}

struct AnalyzeFlags {
  fs::path results = "results.csv";
  fs::path out_dir;
};

int cmd_analyze(const AnalyzeFlags& f) {
  const auto records = read_results_csv(f.results);
  std::vector<ExperimentRecord> noisy, teachers;
  for (const auto& r : records) {
    if (r.provenance == Provenance::NoisyBcpd) noisy.push_back(r);
    if (r.provenance == Provenance::Teacher) teachers.push_back(r);
  }
  std::printf("%zu records (%zu noisy-BCPD, %zu teacher)\n", records.size(), noisy.size(), teachers.size());

  if (!f.out_dir.empty()) {
    fs::create_directories(f.out_dir);
    auto pairs = [](std::span<const ExperimentRecord> rs, RecordField x) {
      std::vector<std::pair<double, double>> out;
      const auto xs = field_values(rs, x);
      for (std::size_t i = 0; i < rs.size(); ++i) out.emplace_back(xs[i], rs[i].student_test_acc);
      return out;
    };
    if (!noisy.empty()) {
      write_dat(f.out_dir / "set1_mse.dat", "mse_to_bcpd student_test_acc", pairs(noisy, RecordField::MseToBcpd));
      write_dat(f.out_dir / "set1_ce.dat", "ce_to_bcpd student_test_acc", pairs(noisy, RecordField::CeToBcpd));
    }
    for (LossKind k : {LossKind::CE, LossKind::MSE}) {
      const auto group = filter_teacher(teachers, k);
      if (group.empty()) continue;
      const std::string name = "teacher_" + std::string(to_string(k));
      write_dat(f.out_dir / (name + "_mse.dat"), "mse_to_bcpd student_test_acc", pairs(group, RecordField::MseToBcpd));
      write_dat(f.out_dir / (name + "_ce.dat"), "ce_to_bcpd student_test_acc", pairs(group, RecordField::CeToBcpd));
    }
    std::map<double, std::map<LossKind, std::vector<double>>> semi;
    for (const auto& r : records)
      if (r.provenance == Provenance::SemiTeacher && r.teacher_loss)
        semi[r.labeled_fraction.value_or(0.0)][*r.teacher_loss].push_back(r.student_test_acc);
    for (LossKind k : {LossKind::CE, LossKind::MSE}) {
      std::vector<std::pair<double, double>> rows;
      for (auto& [frac, kinds] : semi)
        if (!kinds[k].empty()) rows.emplace_back(frac, mean(kinds[k]));
      if (!rows.empty())
        write_dat(f.out_dir / ("semi_" + std::string(to_string(k)) + ".dat"),
                  "labeled_fraction mean_student_test_acc", rows);
    }
  }

  if (noisy.size() >= 3) {
    print_set1_summary(noisy);
    const double rm = correlation(noisy, RecordField::MseToBcpd, RecordField::StudentTestAcc).spearman;
    const double rc = correlation(noisy, RecordField::CeToBcpd, RecordField::StudentTestAcc).spearman;
    const char* relation = std::abs(rc) < std::abs(rm) ? "weaker than" : (std::abs(rc) == std::abs(rm) ? "as strong as" : "stronger than");
    std::printf("verdict: |spearman(acc, ce)| = %.4f is %s |spearman(acc, mse)| = %.4f\n", std::abs(rc),
                relation, std::abs(rm));
  }
  if (!teachers.empty()) {
    print_teacher_summary(teachers);
    auto by_kind = summarize_by_kind(teachers);
    const auto& ce = by_kind[LossKind::CE];
    const auto& ms = by_kind[LossKind::MSE];
    if (!ce.student.empty() && !ms.student.empty())
      std::printf("verdict: MSE-teacher students %s CE-teacher students (%.4f vs %.4f)\n",
                  mean(ms.student) > mean(ce.student) ? "outperform" : "do not outperform", mean(ms.student),
                  mean(ce.student));
  }
  print_semi_summary(records);
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-distillation lab on synthetic Gaussian data"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_config("--config", "", "INI/TOML config file; command-line flags take precedence");
  app.set_version_flag("--version", kToolVersion);

  GlobalFlags g;
  app.add_option("--seed", g.seed, "Root seed; every random stream is derived from it");
  app.add_flag("--fast", g.fast, "Fast profile: 2e4 samples instead of 1e5 where the tool generates data");
  app.add_option("--jobs", g.jobs, "Worker threads for sweeps")->check(CLI::PositiveNumber);

  GenDataFlags gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a Gaussian dataset with its analytic posterior");
  gen_cmd->add_option("--out", gen.out, "Dataset CSV; metadata goes to <stem>.meta.json");
  gen_cmd->add_option("--samples", gen.samples, "Number of samples (0: 1e5, or 2e4 with --fast)");
  gen_cmd->add_option("--classes", gen.classes, "Number of classes")->check(CLI::Range(2, 1000));
  gen_cmd->add_option("--dim", gen.dim, "Input dimension")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--sigma", gen.sigma, "Per-coordinate noise standard deviation")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--delta-mu", gen.delta_mu, "Mean entries are drawn from {-d, 0, d}")
      ->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--split", gen.ratios, "Train/val/test ratios")->expected(3);

  TrainConfig teacher_cfg;
  TeacherFlags teacher;
  auto* teacher_cmd = app.add_subcommand("train-teacher", "Train a teacher on one-hot labels");
  teacher_cmd->add_option("--data", teacher.data, "Dataset CSV");
  teacher_cmd->add_option("--loss", teacher.loss, "Teacher loss")
      ->check(CLI::IsMember({"ce", "mse"}, CLI::ignore_case));
  teacher_cmd->add_option("--out", teacher.out, "Checkpoint path");
  teacher_cmd->add_option("--history", teacher.history, "Per-epoch history CSV (default <stem>.history.csv)");
  add_train_flags(teacher_cmd, teacher_cfg);

  TrainConfig distill_cfg;
  DistillFlags distill;
  auto* distill_cmd = app.add_subcommand("distill", "Train a student on soft targets and append its record");
  distill_cmd->add_option("--data", distill.data, "Dataset CSV");
  distill_cmd->add_option("--targets", distill.targets, "Supervision source")
      ->check(CLI::IsMember({"teacher", "exact-bcpd", "one-hot"}));
  distill_cmd->add_option("--teacher", distill.teacher, "Teacher checkpoint (with --targets teacher)");
  distill_cmd->add_option("--teacher-loss", distill.teacher_loss, "Loss the teacher was trained with, for the record")
      ->check(CLI::IsMember({"ce", "mse"}, CLI::ignore_case));
  distill_cmd->add_option("--out", distill.out, "Results CSV (created with a header, else appended)");
  distill_cmd->add_option("--run-id", distill.run_id, "run_id column value");
  add_train_flags(distill_cmd, distill_cfg);

  TrainConfig sweep_cfg;
  SweepFlags sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run an experiment protocol and write its results CSV");
  sweep_cmd->add_option("kind", sweep.kind, "set1 | set2 | semi | binary")
      ->required()
      ->check(CLI::IsMember({"set1", "set2", "semi", "binary"}));
  sweep_cmd->add_option("--data", sweep.data, "Dataset CSV (not used by binary)");
  sweep_cmd->add_option("--out", sweep.out, "Results CSV (default results_<kind>.csv)");
  sweep_cmd->add_option("--scales", sweep.scales, "set1: number of log-spaced noise scales")
      ->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--min-scale", sweep.min_scale, "set1: smallest noise scale")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--max-scale", sweep.max_scale, "set1: largest noise scale")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--repeats", sweep.repeats, "set2/binary: teachers per loss (0: 10 for set2, 5 for binary)");
  sweep_cmd->add_option("--fractions", sweep.fractions, "semi: labeled fractions of the train split");
  sweep_cmd->add_option("--semi-seeds", sweep.semi_seeds, "semi: seeds per fraction")->check(CLI::PositiveNumber);
  sweep_cmd->add_flag("--soft-on-labeled", sweep.soft_on_labeled,
                      "semi: use teacher outputs on labeled rows too");
  sweep_cmd->add_option("--binary-samples", sweep.binary_samples, "binary: samples (0: 1e5, or 2e4 with --fast)");
  add_train_flags(sweep_cmd, sweep_cfg);

  AnalyzeFlags analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "Correlations, teacher comparison and plot data");
  analyze_cmd->add_option("--results", analyze.results, "Results CSV")->required();
  analyze_cmd->add_option("--out-dir", analyze.out_dir, "Directory for two-column .dat files");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) return cmd_gen_data(app, g, gen);
    if (*teacher_cmd) return cmd_train_teacher(app, g, teacher_cfg, teacher);
    if (*distill_cmd) return cmd_distill(app, g, distill_cfg, distill);
    if (*sweep_cmd) return cmd_sweep(app, g, sweep_cfg, sweep);
    if (*analyze_cmd) return cmd_analyze(analyze);
  } catch (const InvariantError& e) {
    std::cerr << "kdlab: invariant check failed: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "kdlab: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
