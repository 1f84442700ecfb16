// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Experiments use the fast profile (20000
// samples) with the CLI's seeding, so `kdlab --fast gen-data` followed by
// `kdlab --fast sweep <kind>` reproduces the same records.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "kdlab/analysis.hpp"
#include "kdlab/distill_lab.hpp"
#include "kdlab/losses.hpp"
#include "kdlab/nn_core.hpp"
#include "kdlab/synth_data.hpp"

namespace fs = std::filesystem;
using namespace kdlab;

namespace {

// Pinned tolerances and thresholds.
constexpr double kIdentityTol = 1e-12;
constexpr std::size_t kIdentityPairs = 10000;
constexpr double kGradTol = 1e-5;
constexpr double kGradEpsilon = 1e-5;
constexpr std::size_t kGradModels = 20;
constexpr double kKinkMargin = 1e-4;
constexpr double kSet1SpearmanMax = -0.7;
constexpr double kWelchAlpha = 0.1;
constexpr double kBinarySlack = 0.005;
constexpr std::size_t kSemiMinWins = 3;
constexpr double kToyCe = 0.6111;
constexpr double kToyCeTol = 5e-4;
constexpr double kToyMseTol = 1e-15;

// Runtime budgets in seconds.
constexpr double kBudgetIdentities = 5;
constexpr double kBudgetGrad = 10;
constexpr double kBudgetSet1 = 15 * 60;
constexpr double kBudgetSet2 = 30 * 60;
constexpr double kBudgetReference = 10 * 60;
constexpr double kBudgetSemi = 30 * 60;
constexpr double kBudgetBinary = 15 * 60;
constexpr double kBudgetDeterminism = 5 * 60;

constexpr std::size_t kFastSamples = 20000;
constexpr std::uint64_t kSeed = 0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_s; // 0: no runtime bound
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::size_t worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

RunOptions run_options(const char* tag) {
  RunOptions o;
  o.jobs = worker_count();
  o.progress = [tag](std::size_t done, std::size_t total) {
    std::fprintf(stderr, "  [%s] %zu/%zu\n", tag, done, total);
  };
  return o;
}

TrainConfig default_config() {
  TrainConfig cfg;
  cfg.seed = kSeed;
  return cfg;
}

// The default dataset: 3 classes, d = 30, sigma 4, delta_mu 1, fast profile.
const LabeledDataset& default_dataset() {
  static const LabeledDataset data =
      generate_dataset(RngState(kSeed), 3, 30, 1.0, 4.0, kFastSamples).data;
  return data;
}

ProbVector random_simplex(RngState& rng, std::size_t c) {
  std::vector<double> v(c);
  double s = 0.0;
  for (double& x : v) {
    x = -std::log(1.0 - rng.uniform());
    s += x;
  }
  for (double& x : v) x /= s;
  return ProbVector(std::move(v));
}

Outcome identities() {
  RngState rng(11);
  double worst_ce = 0.0, worst_mse = 0.0;
  for (std::size_t c : {2u, 3u, 10u}) {
    for (std::size_t t = 0; t < kIdentityPairs; ++t) {
      const ProbVector ps = random_simplex(rng, c);
      const ProbVector p = random_simplex(rng, c);
      // Brute force over the labels, independent of the library's helper.
      double e_ce = 0.0, e_mse = 0.0, norm = 0.0;
      for (std::size_t y = 0; y < c; ++y) {
        double sq = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
          const double d = (k == y ? 1.0 : 0.0) - p[k];
          sq += d * d;
        }
        e_ce += ps[y] * -std::log(std::max(p[y], kCeFloor));
        e_mse += ps[y] * sq;
        norm += ps[y] * ps[y];
      }
      worst_ce = std::max(worst_ce, std::abs(e_ce - ce_distance(ps, p)));
      worst_mse = std::max(worst_mse, std::abs(e_mse - mse_distance(ps, p) - (1.0 - norm)));
      worst_ce = std::max(worst_ce, std::abs(expected_loss_over_labels(ps, p, LossKind::CE) - e_ce));
      worst_mse = std::max(worst_mse, std::abs(expected_loss_over_labels(ps, p, LossKind::MSE) - e_mse));
    }
  }
  return {worst_ce <= kIdentityTol && worst_mse <= kIdentityTol,
          fmt("3x%zu pairs, max |ce gap| %.2e, max |mse gap| %.2e (tol %.0e)", kIdentityPairs, worst_ce,
              worst_mse, kIdentityTol)};
}

// True when some hidden pre-activation lies within reach of a perturbation,
// where the ReLU network has no derivative to check against.
bool near_kink(const MlpModel& m, const Matrix& x) {
  const auto f = forward(m, x);
  for (std::size_t l = 0; l + 1 < f.cache.pre.size(); ++l)
    for (double v : f.cache.pre[l].data())
      if (std::abs(v) < kKinkMargin) return true;
  return false;
}

Outcome gradients() {
  double worst = 0.0;
  std::size_t checked = 0, skipped = 0;
  for (std::uint64_t seed = 0; checked < kGradModels; ++seed) {
    RngState rng(500 + seed);
    const MlpModel m = init_params(rng, 5, 7, 3);
    const Matrix x = gaussian_matrix(rng, 4, 5, 0.0, 1.0);
    std::vector<int> y(4);
    for (int& v : y) v = static_cast<int>(rng.uniform_index(3));
    if (near_kink(m, x)) {
      ++skipped;
      continue;
    }
    ++checked;
    const auto targets = TargetDistribution::one_hot(y, 3);
    for (LossKind kind : {LossKind::CE, LossKind::MSE}) {
      const LossEvaluator loss = [&](const Matrix& z) { return loss_and_grad(kind, z, targets); };
      worst = std::max(worst, grad_check(m, loss, x, kGradEpsilon));
    }
  }
  return {worst < kGradTol, fmt("%zu models x {ce, mse} (skipped at a relu kink: %zu), max relative error "
                                "%.2e (tol %.0e)",
                                checked, skipped, worst, kGradTol)};
}

std::vector<ExperimentRecord> set1_records;

Outcome set1_correlation() {
  set1_records = run_set1(default_config(), default_dataset(), log_spaced(100, 0.02, 3.0),
                          RngState(kSeed).fork("set1"), run_options("set1"));
  const Correlation c =
      correlation(set1_records, RecordField::StudentTestAcc, RecordField::MseToBcpd);
  return {c.spearman <= kSet1SpearmanMax,
          fmt("100 scales, spearman(acc, mse_to_bcpd) = %.4f (need <= %.2f), pearson %.4f", c.spearman,
              kSet1SpearmanMax, c.pearson)};
}

Outcome set1_ce() {
  if (set1_records.empty()) return {false, "no set 1 records"};
  const double s_mse =
      correlation(set1_records, RecordField::StudentTestAcc, RecordField::MseToBcpd).spearman;
  const double s_ce =
      correlation(set1_records, RecordField::StudentTestAcc, RecordField::CeToBcpd).spearman;
  const char* rel = std::abs(s_ce) < std::abs(s_mse) ? "weaker" : (std::abs(s_ce) == std::abs(s_mse) ? "tied" : "stronger");
  // Fails only when the CE correlation is stronger.
  return {std::abs(s_ce) <= std::abs(s_mse),
          fmt("|spearman(acc, ce)| = %.4f vs |spearman(acc, mse)| = %.4f (%s)", std::abs(s_ce),
              std::abs(s_mse), rel)};
}

std::vector<ExperimentRecord> set2_records;

std::vector<double> values(std::span<const ExperimentRecord> records, LossKind kind, RecordField field) {
  const auto recs = filter_teacher(records, kind);
  return field_values(recs, field);
}

Outcome set2_separation() {
  set2_records = run_set2(default_config(), default_dataset(), 10, RngState(kSeed).fork("set2"),
                          run_options("set2"));
  const auto ce_d = values(set2_records, LossKind::CE, RecordField::MseToBcpd);
  const auto mse_d = values(set2_records, LossKind::MSE, RecordField::MseToBcpd);
  const auto ce_a = values(set2_records, LossKind::CE, RecordField::StudentTestAcc);
  const auto mse_a = values(set2_records, LossKind::MSE, RecordField::StudentTestAcc);
  const WelchResult wd = welch_greater(ce_d, mse_d);
  const WelchResult wa = welch_greater(mse_a, ce_a);
  const bool a = mean(mse_d) < mean(ce_d) && wd.p_one_sided < kWelchAlpha;
  const bool b = mean(mse_a) > mean(ce_a) && wa.p_one_sided < kWelchAlpha;
  return {a && b,
          fmt("(a) %s mse_to_bcpd mse %.5f vs ce %.5f, p = %.3g; (b) %s student acc mse %.4f vs ce %.4f, "
              "p = %.3g (alpha %.2f)",
              a ? "ok" : "NOT MET", mean(mse_d), mean(ce_d), wd.p_one_sided, b ? "ok" : "NOT MET",
              mean(mse_a), mean(ce_a), wa.p_one_sided, kWelchAlpha)};
}

Outcome teacher_accuracy() {
  if (set2_records.empty()) return {false, "no set 2 records"};
  const auto ce = values(set2_records, LossKind::CE, RecordField::TeacherTestAcc);
  const auto mse = values(set2_records, LossKind::MSE, RecordField::TeacherTestAcc);
  const double diff = mean(mse) - mean(ce);
  // Reported, not asserted.
  return {std::isfinite(diff), fmt("report only: teacher test acc mse %.4f vs ce %.4f (%+.4f)", mean(mse),
                                   mean(ce), diff)};
}

Outcome exact_vs_one_hot() {
  const TrainConfig cfg = default_config();
  const RngState root = RngState(kSeed).fork("reference");
  std::vector<double> exact, hard;
  for (std::size_t s = 0; s < 5; ++s) {
    const RngState run = root.fork(s);
    exact.push_back(run_reference_student(cfg, default_dataset(), Provenance::ExactBcpd, run).student_test_acc);
    hard.push_back(run_reference_student(cfg, default_dataset(), Provenance::OneHot, run).student_test_acc);
    std::fprintf(stderr, "  [reference] %zu/5\n", s + 1);
  }
  const double diff = mean(exact) - mean(hard);
  return {diff >= 0.0, fmt("5 seeds, exact-bcpd acc %.4f vs one-hot %.4f (diff %+.4f, need >= 0)", mean(exact),
                           mean(hard), diff)};
}

Outcome semi_direction() {
  const std::vector<double> fractions{0.01, 0.02, 0.04, 0.08};
  const RngState semi = RngState(kSeed).fork("semi");
  std::size_t wins = 0;
  std::string detail;
  for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
    std::vector<double> acc[2];
    for (std::size_t s = 0; s < 3; ++s)
      for (LossKind kind : {LossKind::CE, LossKind::MSE})
        acc[kind == LossKind::MSE].push_back(
            run_semi_supervised(default_config(), default_dataset(), fractions[fi], kind, semi.fork(fi).fork(s))
                .student_test_acc);
    const bool win = mean(acc[1]) >= mean(acc[0]);
    wins += win;
    detail += fmt("%s%.0f%%: mse %.4f vs ce %.4f", fi ? "; " : "", 100 * fractions[fi], mean(acc[1]), mean(acc[0]));
    std::fprintf(stderr, "  [semi] fraction %zu/4\n", fi + 1);
  }
  return {wins >= kSemiMinWins, fmt("mse >= ce at %zu/4 fractions (need %zu): ", wins, kSemiMinWins) + detail};
}

Outcome binary_direction() {
  BinaryOptions opt;
  opt.num_samples = kFastSamples;
  opt.repeats = 5;
  const auto records = run_binary(default_config(), RngState(kSeed).fork("binary"), opt, run_options("binary"));
  const auto ce = values(records, LossKind::CE, RecordField::StudentTestAcc);
  const auto mse = values(records, LossKind::MSE, RecordField::StudentTestAcc);
  return {mean(mse) >= mean(ce) - kBinarySlack,
          fmt("5+5 replicates, student acc mse %.4f vs ce %.4f (need >= ce - %.3f)", mean(mse), mean(ce),
              kBinarySlack)};
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism(const fs::path& cli, const fs::path& work) {
  if (!fs::exists(cli)) return {false, "CLI not found at " + cli.string()};
  const std::string train = " --epochs 3 --hidden 16";
  const std::vector<std::string> steps{
      "--seed 3 gen-data --samples 3000 --out data.csv",
      "--seed 3 train-teacher --data data.csv --loss mse --out teacher.bin" + train,
      "--seed 3 distill --data data.csv --targets teacher --teacher teacher.bin --out distill.csv" + train,
      "--seed 3 sweep set1 --data data.csv --scales 4 --out set1.csv" + train,
      "--seed 3 --jobs 2 sweep set2 --data data.csv --repeats 2 --out set2.csv" + train,
      "--seed 3 sweep semi --data data.csv --fractions 0.05 0.1 --semi-seeds 2 --out semi.csv" + train,
      "--seed 3 sweep binary --binary-samples 3000 --repeats 2 --out binary.csv" + train,
      "analyze --results set2.csv --out-dir analysis",
  };
  std::vector<fs::path> dirs{work / "run_a", work / "run_b"};
  for (const auto& d : dirs) {
    fs::remove_all(d);
    fs::create_directories(d);
    for (const auto& s : steps) {
      const std::string cmd = "cd '" + d.string() + "' && '" + cli.string() + "' " + s + " > /dev/null 2>&1";
      if (std::system(cmd.c_str()) != 0) return {false, "command failed: kdlab " + s};
    }
  }
  // Every output except the manifests (they carry a creation timestamp).
  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(dirs[0])) {
    if (!e.is_regular_file() || e.path().string().ends_with(".manifest.json")) continue;
    const fs::path rel = fs::relative(e.path(), dirs[0]);
    if (read_bytes(e.path()) != read_bytes(dirs[1] / rel)) return {false, rel.string() + " differs between runs"};
    ++compared;
  }
  return {compared >= 10, fmt("%zu output files byte-identical across two runs of %zu commands", compared,
                              steps.size())};
}

Outcome worked_example() {
  const double ce = ce_distance(std::vector<double>{0.3, 0.7}, std::vector<double>{0.29, 0.71});
  const double m1 = mse_distance(std::vector<double>{0.3, 0.7}, std::vector<double>{0.29, 0.71});
  const double m2 = mse_distance(std::vector<double>{0.3, 0.7}, std::vector<double>{0.2, 0.8});
  const bool ok = std::abs(ce - kToyCe) <= kToyCeTol && std::abs(m1 - 2e-4) <= kToyMseTol &&
                  std::abs(m2 - 0.02) <= kToyMseTol;
  return {ok, fmt("ce %.6f (want %.4f +- %.0e), mse %.3g and %.3g (want 2e-4 and 0.02)", ce, kToyCe, kToyCeTol,
                  m1, m2)};
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"kdlab acceptance suite"};
  std::vector<int> only;
  fs::path cli = KDLAB_CLI_PATH;
  fs::path work = fs::temp_directory_path() / "kdlab_acceptance";
  app.add_option("--only", only, "Run only these criteria (1-11)");
  app.add_option("--cli", cli, "Path to the kdlab executable")->capture_default_str();
  app.add_option("--work-dir", work, "Scratch directory for the determinism runs")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {1, "loss identities", kBudgetIdentities, identities},
      {2, "gradient check", kBudgetGrad, gradients},
      {3, "set 1 mse correlation", kBudgetSet1, set1_correlation},
      {4, "set 1 ce weaker", 0, set1_ce},
      {5, "set 2 separation", kBudgetSet2, set2_separation},
      {6, "teacher accuracy", 0, teacher_accuracy},
      {7, "exact bcpd vs one-hot", kBudgetReference, exact_vs_one_hot},
      {8, "semi-supervised direction", kBudgetSemi, semi_direction},
      {9, "binary direction", kBudgetBinary, binary_direction},
      {10, "determinism", kBudgetDeterminism, [&] { return determinism(cli, work); }},
      {11, "worked example", 0, worked_example},
  };
  const std::set<int> selected(only.begin(), only.end());

  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.contains(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string timing = fmt("%.1fs", secs);
    if (c.budget_s > 0) {
      timing += fmt(" of %.0fs", c.budget_s);
      if (secs > c.budget_s) {
        o.pass = false;
        timing += " OVER BUDGET";
      }
    }
    failed += !o.pass;
    std::printf("%s criterion %d (%s): %s [%s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                timing.c_str());
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failed);
  return failed ? 1 : 0;
}
