// Acceptance run: one PASS/FAIL line per criterion, tolerances fixed below.
//
//   acceptance --workdir DIR [--report] [--quick]
//
// Exit status is 1 when any criterion fails, unless --report is given, in which case
// only a harness error (a crashed subprocess, an unreadable report) is non-zero.

#include <sys/wait.h>

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "emdscan/data_io.hpp"
#include "emdscan/ensemble.hpp"
#include "emdscan/experiment.hpp"
#include "emdscan/features.hpp"
#include "emdscan/pca.hpp"
#include "oracles.hpp"

using namespace emdscan;
namespace fs = std::filesystem;

namespace {

namespace tol {
constexpr int kSignals = 1000;
constexpr double kReconstruction = 1e-9;
constexpr double kC2 = 0.05;
constexpr double kEmdSeconds = 30.0;
constexpr double kTwoTone = 0.2;
constexpr int kDriftVolunteers = 25;  // x 4 visits x 2 breasts = 200 scans
constexpr int kDriftShift = 4;
constexpr double kDriftLinf = 0.05;
constexpr double kDriftFraction = 0.9;
constexpr int kSvmInstances = 50;
constexpr double kSvmAgreement = 0.99;
constexpr double kKkt = 1e-6;
constexpr int kPcaMatrices = 50;
constexpr double kPcaScore = 1e-8;
constexpr double kNp = 1e-12;
constexpr double kNpSlack = 0.1;
constexpr double kNpFraction = 0.8;
constexpr double kAucMargin = 0.03;
constexpr double kGammaGap = 0.02;
constexpr double kRuntime = 600.0;
}  // namespace tol

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
  failures += !o.pass;
  std::printf("criterion %2d %s  %s: %s\n", id, o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
  std::fflush(stdout);
}

void skip(int id, const std::string& name) { std::printf("criterion %2d SKIP  %s\n", id, name.c_str()); }

std::string num(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double norm2(std::span<const double> x) {
  double s = 0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

// ---- 1 ----
Outcome emd_correctness() {
  std::mt19937_64 rng(1001);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g;
  const auto t0 = std::chrono::steady_clock::now();
  double worst_rec = 0;
  std::size_t imfs = 0, checked = 0, c1_fail = 0, c2_fail = 0, warned = 0;
  for (int k = 0; k < tol::kSignals; ++k) {
    const std::size_t n = 200 + static_cast<std::size_t>(u(rng) * 600);
    std::vector<double> x(n);
    const int tones = 1 + static_cast<int>(u(rng) * 4);
    std::vector<std::array<double, 3>> t(tones);
    for (auto& p : t) p = {2 + u(rng) * 60, 0.2 + u(rng), u(rng) * 6.3};
    const double noise = u(rng) * 0.3, trend = g(rng);
    for (std::size_t i = 0; i < n; ++i) {
      const double s = double(i) / double(n);
      x[i] = trend * s + noise * g(rng);
      for (const auto& p : t) x[i] += p[1] * std::sin(2 * std::numbers::pi * p[0] * s + p[2]);
    }
    const auto set = sift(x);
    const auto r = set.reconstruct();
    double e = 0;
    for (std::size_t i = 0; i < n; ++i) e += (r[i] - x[i]) * (r[i] - x[i]);
    worst_rec = std::max(worst_rec, std::sqrt(e) / norm2(x));
    for (std::size_t m = 0; m < set.imfs.size(); ++m) {
      ++imfs;
      if (set.not_converged[m]) {
        ++warned;
        continue;
      }
      ++checked;
      const auto& d = set.imfs[m];
      c1_fail += !count_c1(d).passes;
      const auto env = envelopes(d, find_extrema(d));
      std::vector<double> mean(d.size());
      for (std::size_t i = 0; i < d.size(); ++i) mean[i] = 0.5 * (env.upper[i] + env.lower[i]);
      c2_fail += !(rms(mean) < tol::kC2 * rms(d));
    }
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = worst_rec < tol::kReconstruction && c1_fail == 0 && c2_fail == 0 && secs < tol::kEmdSeconds;
  o.detail = "max rel reconstruction error " + num(worst_rec) + ", " + std::to_string(checked) + " of " +
             std::to_string(imfs) + " IMFs checked (" + std::to_string(warned) + " flagged), C1 failures " +
             std::to_string(c1_fail) + ", C2 failures " + std::to_string(c2_fail) + ", " + num(secs, 3) + " s";
  return o;
}

// ---- 2 ----
Outcome two_tone() {
  const std::size_t n = 1024;
  std::vector<double> hi(n), lo(n), x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = double(i) / double(n);
    hi[i] = std::sin(2 * std::numbers::pi * 32 * t);
    lo[i] = std::sin(2 * std::numbers::pi * 4 * t);
    x[i] = hi[i] + lo[i];
  }
  const auto set = sift(x);
  if (set.imfs.size() < 2) return {false, "fewer than 2 IMFs"};
  auto err = [&](const std::vector<double>& got, const std::vector<double>& want) {
    double e = 0, w = 0;
    for (std::size_t i = n / 10; i < n - n / 10; ++i) {
      e += (got[i] - want[i]) * (got[i] - want[i]);
      w += want[i] * want[i];
    }
    return std::sqrt(e / w);
  };
  const double e1 = err(set.imfs[0], hi), e2 = err(set.imfs[1], lo);
  return {e1 < tol::kTwoTone && e2 < tol::kTwoTone, "32-cycle error " + num(e1) + ", 4-cycle error " + num(e2)};
}

// ---- 3 ----
Outcome shift_robustness() {
  CohortConfig cc;
  cc.visits.assign(tol::kDriftVolunteers, 4);
  cc.synth.generated_pairs = 20;
  cc.seed = 3003;
  const auto cohort = build_cohort(cc);
  const auto r = feature_shift_drift(cohort.scans, cohort.pairs, tol::kDriftShift, PipelineConfig{});
  std::size_t small = 0, better = 0;
  for (std::size_t i = 0; i < r.emd.size(); ++i) {
    small += r.emd[i] < tol::kDriftLinf;
    better += r.emd[i] < r.pca[i];
  }
  const double n = static_cast<double>(r.emd.size());
  const double fa = small / n, fb = better / n;
  Outcome o;
  o.pass = fa >= tol::kDriftFraction && fb >= tol::kDriftFraction;
  o.detail = std::to_string(cohort.scans.size()) + " scans x " + std::to_string(cohort.pairs.size()) +
             " pairs; EMD drift < " + num(tol::kDriftLinf) + " in " + num(100 * fa, 3) + "% of cells, EMD < PCA in " +
             num(100 * fb, 3) + "% (mean drift EMD " + num(r.emd_mean) + ", PCA " + num(r.pca_mean) + ")";
  return o;
}

// ---- 4 ----
Outcome svm_oracle() {
  std::mt19937_64 rng(4004);
  std::uniform_real_distribution<double> nu(0.1, 1.0), gam(0.2, 2.0);
  std::size_t agree = 0, total = 0;
  double worst_kkt = 0;
  for (int k = 0; k < tol::kSvmInstances; ++k) {
    const auto in = oracle::random_svm_instance(rng);
    const SvmParams p{nu(rng), nu(rng), gam(rng)};
    const auto K = rbf_kernel(in.x, in.x, p.gamma);
    const auto sol = solve_dual(K, in.y, p);
    worst_kkt = std::max(worst_kkt, oracle::kkt_residual(K, in.y, sol.beta, sol.r_plus, sol.r_minus, p));
    const auto m = model_from_dual(in.x, in.y, sol, p);
    const auto ref = oracle::dense_qp(in, p);
    for (int a = 0; a < 10; ++a)
      for (int b = 0; b < 10; ++b) {
        const double x0 = -3 + 6 * a / 9.0, x1 = -3 + 6 * b / 9.0;
        const std::vector<double> probe{x0, x1};
        agree += (m.decision(probe) > 0) == (oracle::dense_decision(in, ref, p.gamma, x0, x1) > 0);
        ++total;
      }
  }
  const double frac = double(agree) / double(total);
  return {frac >= tol::kSvmAgreement && worst_kkt < tol::kKkt, "sign agreement " + num(100 * frac, 5) + "% over " +
                                                                   std::to_string(total) +
                                                                   " probes, max KKT residual " + num(worst_kkt)};
}

// ---- 5 ----
Outcome pca_oracle() {
  std::mt19937_64 rng(5005);
  std::uniform_int_distribution<int> rows(3, 40), cols(2, 60);
  double worst = 0;
  int rank_mismatch = 0;
  for (int k = 0; k < tol::kPcaMatrices; ++k) {
    const int n = rows(rng), t = cols(rng);
    const auto X = oracle::random_matrix(n, t, 50000 + k);
    const auto m = pca_fit(X);
    const auto keep = std::min<Eigen::Index>({30, n - 1, t});
    if (static_cast<Eigen::Index>(m.retained()) != keep) {
      ++rank_mismatch;
      continue;
    }
    const auto O = oracle::pca_components(X, keep);
    const Eigen::RowVectorXd mean = X.colwise().mean();
    const Eigen::VectorXd pc1 = (X.rowwise() - mean) * O.row(0).transpose();
    const double lo = pc1.minCoeff(), range = pc1.maxCoeff() - lo;
    Eigen::MatrixXd probes(n + 1, t);
    probes << X, oracle::random_matrix(1, t, 90000 + k);
    for (Eigen::Index r = 0; r < probes.rows(); ++r) {
      const Eigen::VectorXd x = probes.row(r).transpose();
      const auto s = pca_scores(m, std::span<const double>(x.data(), static_cast<std::size_t>(t)));
      const Eigen::VectorXd want = O * (x - mean.transpose());
      for (Eigen::Index j = 0; j < 30; ++j) {
        const double w = j >= keep ? 0.0 : (j == 0 ? (want(0) - lo) / range : want(j) / range);
        worst = std::max(worst, std::abs(s[static_cast<std::size_t>(j)] - w));
      }
    }
  }
  return {worst < tol::kPcaScore && rank_mismatch == 0,
          "max score difference " + num(worst) + " over " + std::to_string(tol::kPcaMatrices) + " matrices" +
              (rank_mismatch ? ", " + std::to_string(rank_mismatch) + " retained-count mismatches" : "")};
}

// ---- 6 ----
Outcome np_examples() {
  const double a = std::abs(np_measure(0.05, 0.2, 0.1) - 0.2);
  const double b = std::abs(np_measure(0.2, 0.3, 0.1) - 1.3);
  double c = 0;
  for (double alpha : {0.01, 0.1, 0.25, 0.5, 0.9}) c = std::max(c, std::abs(np_measure(alpha, 0.37, alpha) - 0.37));
  const double worst = std::max({a, b, c});
  return {worst <= tol::kNp, "max deviation " + num(worst)};
}

// ---- end-to-end helpers ----

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(EMD_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

using CsvRow = std::map<std::string, std::string>;

std::vector<CsvRow> read_csv(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string f; std::getline(ss, f, ',');) out.push_back(f);
    return out;
  };
  std::string line;
  std::getline(in, line);
  const auto head = split(line);
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    const auto f = split(line);
    CsvRow r;
    for (std::size_t i = 0; i < head.size() && i < f.size(); ++i) r[head[i]] = f[i];
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---- 7 ----
Outcome np_control(const fs::path& report_dir) {
  std::size_t ok = 0, cells = 0;
  std::string per_mode;
  std::map<std::string, std::pair<double, double>> by_mode;
  for (const auto& r : read_csv(report_dir / "summary.csv")) {
    const double gamma = std::stod(r.at("gamma")), alpha = std::stod(r.at("alpha"));
    const auto& mode = r.at("mode");
    if (gamma != 1.0 || (mode != "emd" && mode != "pca" && mode != "combined")) continue;
    if (alpha != 0.1 && alpha != 0.3 && alpha != 0.5) continue;
    const auto n = std::stoul(r.at("cells"));
    const auto k = static_cast<std::size_t>(std::lround(std::stod(r.at("pf_within_alpha_plus_0.1")) * double(n)));
    ok += k;
    cells += n;
    by_mode[mode].first += double(k);
    by_mode[mode].second += double(n);
  }
  if (cells == 0) return {false, "no split-alpha cells in summary.csv"};
  for (const auto& [m, v] : by_mode) per_mode += " " + m + " " + num(100 * v.first / v.second, 3) + "%";
  const double frac = double(ok) / double(cells);
  return {frac >= tol::kNpFraction, "pf <= alpha + " + num(tol::kNpSlack) + " in " + std::to_string(ok) + " of " +
                                        std::to_string(cells) + " cells (" + num(100 * frac, 3) + "%;" + per_mode +
                                        ")"};
}

std::map<std::pair<double, std::string>, double> read_auc(const fs::path& report_dir) {
  std::map<std::pair<double, std::string>, double> out;
  for (const auto& r : read_csv(report_dir / "auc.csv"))
    out[{std::stod(r.at("gamma")), r.at("mode")}] = std::stod(r.at("auc"));
  return out;
}

// ---- 8 ----
Outcome auc_ordering(const fs::path& report_dir) {
  const auto auc = read_auc(report_dir);
  const auto c = auc.find({1.0, "combined"}), e = auc.find({1.0, "emd"}), p = auc.find({1.0, "pca"});
  if (c == auc.end() || e == auc.end() || p == auc.end()) return {false, "auc.csv lacks a feature mode"};
  const bool ok = c->second >= e->second && e->second >= p->second && c->second - p->second >= tol::kAucMargin;
  return {ok, "combined " + num(c->second) + ", EMD " + num(e->second) + ", PCA " + num(p->second) +
                  " (combined - PCA " + num(c->second - p->second) + ")"};
}

// ---- 9 ----
Outcome gamma_degradation(const fs::path& report_dir) {
  const auto auc = read_auc(report_dir);
  const auto a = auc.find({1.0, "combined"}), b = auc.find({0.75, "combined"}), c = auc.find({0.5, "combined"});
  if (a == auc.end() || b == auc.end() || c == auc.end()) return {false, "auc.csv lacks a response attenuation"};
  const bool ok = a->second - b->second >= tol::kGammaGap && b->second - c->second >= tol::kGammaGap;
  return {ok, "AUC at 1 / 0.75 / 0.5: " + num(a->second) + " / " + num(b->second) + " / " + num(c->second)};
}

// ---- 10 ----
Outcome protocol(const fs::path& data_dir) {
  std::size_t n = 0, bad = 0;
  double lo = 1e9, hi = 0;
  for (const auto& dir : dataset_dirs(data_dir)) {
    const auto s = read_dataset(dir);
    const auto c = check_protocol(s.dataset, s.splits);
    ++n;
    bad += !(c.ok() && c.splits == 66);
    lo = std::min(lo, c.min_train_ratio);
    hi = std::max(hi, c.max_train_ratio);
  }
  return {bad == 0, std::to_string(n) + " datasets, " + std::to_string(bad) + " violating; train ratio range [" +
                        num(lo) + ", " + num(hi) + "]:1"};
}

// ---- 11 ----
std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism(const fs::path& a, const fs::path& b, double first_run_seconds) {
  std::size_t files = 0, differ = 0;
  std::string first_diff;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    ++files;
    if (!fs::exists(b / rel) || file_bytes(e.path()) != file_bytes(b / rel)) {
      if (first_diff.empty()) first_diff = rel.string();
      ++differ;
    }
  }
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file() && !fs::exists(a / fs::relative(e.path(), b))) ++differ;
  const bool ok = files > 0 && differ == 0 && first_run_seconds < tol::kRuntime;
  return {ok, std::to_string(files) + " files compared, " + std::to_string(differ) + " differ" +
                  (first_diff.empty() ? "" : " (first: " + first_diff + ")") + "; first run " +
                  num(first_run_seconds, 4) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string workdir = "acceptance_run";
  bool report_only = false, quick = false;
  app.add_option("--workdir", workdir, "scratch directory for the end-to-end runs");
  app.add_flag("--report", report_only, "exit 0 when every check ran, even if some failed");
  app.add_flag("--quick", quick, "skip the end-to-end criteria 7 to 11");
  CLI11_PARSE(app, argc, argv);

  try {
    report(1, "EMD correctness", emd_correctness());
    report(2, "two-tone separation", two_tone());
    report(3, "shift robustness", shift_robustness());
    report(4, "SVM oracle", svm_oracle());
    report(5, "PCA oracle", pca_oracle());
    report(6, "NP measure", np_examples());

    if (quick) {
      for (int id = 7; id <= 11; ++id) skip(id, "end-to-end");
    } else {
      const fs::path root = fs::absolute(workdir);
      fs::remove_all(root);
      fs::create_directories(root);
      const std::string args = "--seed 7 --desk-scale reproduce --out ";
      const auto t0 = std::chrono::steady_clock::now();
      const int first = run_cli(args + (root / "run1").string(), root / "run1.log");
      const double secs = seconds_since(t0);
      if (first != 0) throw std::runtime_error("reproduce failed with status " + std::to_string(first));
      const int second = run_cli(args + (root / "run2").string(), root / "run2.log");
      if (second != 0) throw std::runtime_error("second reproduce failed with status " + std::to_string(second));

      report(7, "NP control", np_control(root / "run1" / "report"));
      report(8, "AUC ordering", auc_ordering(root / "run1" / "report"));
      report(9, "response attenuation", gamma_degradation(root / "run1" / "report"));
      report(10, "protocol counts", protocol(root / "run1" / "data"));
      report(11, "determinism and runtime", determinism(root / "run1", root / "run2", secs));
    }
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%d criteria failed\n", failures);
  return report_only || failures == 0 ? 0 : 1;
}
