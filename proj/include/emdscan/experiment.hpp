#pragma once

// Experiment driver: per (dataset, split) it fits the feature pipeline, builds a model
// library for every feature mode, sweeps alpha and reduces everything into a report.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "emdscan/dataset.hpp"
#include "emdscan/eval.hpp"
#include "emdscan/parallel.hpp"
#include "emdscan/pipeline.hpp"

namespace emdscan {

/// Byte hash of every signal in a scan; used to recognise recordings shared between datasets.
inline std::uint64_t signal_hash(const Scan& s) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 1099511628211ULL;
  };
  for (const auto& [pair, ts] : s.signals) {
    const int idx = pair.index();
    mix(&idx, sizeof idx);
    mix(ts.samples.data(), ts.samples.size() * sizeof(double));
  }
  return h;
}

/// EMD features keyed by recording content, so healthy scans shared by every dataset are
/// decomposed once.
class EmdCache {
 public:
  explicit EmdCache(PipelineConfig cfg) : cfg_(std::move(cfg)) {}

  /// Decomposes every scan not seen before, in parallel.
  void prefetch(std::span<const Scan> scans) {
    std::vector<Key> keys(scans.size());
    parallel_for(scans.size(), [&](std::size_t i) { keys[i] = key(scans[i]); });
    std::vector<std::size_t> todo;
    std::set<Key> seen;
    for (std::size_t i = 0; i < scans.size(); ++i)
      if (!map_.count(keys[i]) && seen.insert(keys[i]).second) todo.push_back(i);
    std::vector<ScanEmd> fresh(todo.size());
    parallel_for(todo.size(), [&](std::size_t j) { fresh[j] = scan_emd_features(scans[todo[j]], cfg_); });
    for (std::size_t j = 0; j < todo.size(); ++j) map_.emplace(keys[todo[j]], std::move(fresh[j]));
  }

  /// Throws std::out_of_range for a scan that was never prefetched.
  const ScanEmd& at(const Scan& s) const { return map_.at(key(s)); }

  std::size_t size() const { return map_.size(); }

 private:
  using Key = std::tuple<int, int, int, int, std::uint64_t>;
  static Key key(const Scan& s) {
    return {s.volunteer, s.visit, s.side == Side::Left ? 0 : 1, s.label == Label::Tumour ? 1 : 0, signal_hash(s)};
  }
  PipelineConfig cfg_;
  std::map<Key, ScanEmd> map_;
};

struct ExperimentOptions {
  PipelineConfig pipeline;
  NuGrid grid{{0.001, 0.03, 0.1, 0.3, 0.6, 1.0}, {0.001, 0.03, 0.1, 0.3, 0.6, 1.0}, 1.0};
  LibraryOptions library;
  bool group_folds_by_volunteer = false;  // with cv_folds >= 2, keep each volunteer inside one fold
  std::size_t k = 100;
  VoteRule rule = VoteRule::Hard;
  std::vector<double> alphas = alpha_grid(101);
  std::vector<double> report_alphas{0.1, 0.3, 0.5};
  std::vector<FeatureMode> modes{FeatureMode::emd(), FeatureMode::pca(), FeatureMode::combined()};
  bool scalar = false;              // also run the per-scalar-feature library
  std::size_t scalar_datasets = 0;  // scalar study on the first N datasets only; 0: all
};

/// One evaluated (dataset, split, mode, alpha) cell.
struct CellResult {
  int dataset = 0;
  int split = 0;
  double gamma = 1.0;
  std::string mode;
  double alpha = 0.0;
  SplitMetrics metrics;
};

struct ScanOutcome {
  double gamma = 1.0;
  std::string mode;
  double alpha = 0.0;
  int volunteer = 0;
  int truth = 0;
  int pred = 0;
};

struct RocCurve {
  double gamma = 1.0;
  std::string mode;
  std::vector<RocPoint> points;  // pointwise mean per alpha, cleaned
  double auc = 0.0;
  std::vector<double> split_auc;
};

struct VolunteerError {
  double gamma = 1.0;
  std::string mode;
  double alpha = 0.0;
  int volunteer = 0;
  std::size_t scans = 0;
  std::optional<double> error;  // empty: never in a test set
};

struct EvalReport {
  std::vector<CellResult> cells;  // report alphas only
  std::vector<RocCurve> rocs;
  std::vector<ScanOutcome> outcomes;
  std::set<int> volunteers;
  std::map<std::pair<double, int>, std::size_t> scalar_histogram;  // (alpha, feature 1..20) -> members

  const RocCurve* roc(const std::string& mode, double gamma) const {
    for (const auto& r : rocs)
      if (r.mode == mode && r.gamma == gamma) return &r;
    return nullptr;
  }
};

/// Mean error over each volunteer's test scans, per (gamma, mode, alpha).
inline std::vector<VolunteerError> per_volunteer_errors(std::span<const ScanOutcome> outcomes,
                                                        const std::set<int>& volunteers) {
  std::map<std::tuple<double, std::string, double>, std::map<int, std::pair<std::size_t, std::size_t>>> tally;
  for (const auto& o : outcomes) {
    auto& t = tally[{o.gamma, o.mode, o.alpha}][o.volunteer];
    ++t.first;
    t.second += o.pred != o.truth;
  }
  std::vector<VolunteerError> out;
  for (const auto& [key, per] : tally) {
    std::set<int> ids = volunteers;
    for (const auto& [v, _] : per) ids.insert(v);
    for (int v : ids) {
      VolunteerError e{std::get<0>(key), std::get<1>(key), std::get<2>(key), v, 0, std::nullopt};
      if (auto it = per.find(v); it != per.end()) {
        e.scans = it->second.first;
        e.error = static_cast<double>(it->second.second) / static_cast<double>(it->second.first);
      }
      out.push_back(std::move(e));
    }
  }
  return out;
}

struct DriftResult {
  std::vector<double> emd;  // per (scan, pair) cell
  std::vector<double> pca;
  double emd_mean = 0.0;
  double pca_mean = 0.0;
};

/// L-infinity change of the normalised EMD features and of the PCA scores when the analysis
/// window is moved by `shift` samples. Normaliser and PCA are fitted on the unshifted windows.
inline DriftResult feature_shift_drift(std::span<const Scan> scans, std::span<const AntennaPairId> pairs, int shift,
                                       const PipelineConfig& cfg) {
  if (shift < -8 || shift > 8) throw std::invalid_argument("shift must lie in [-8, 8]");
  const std::size_t n = scans.size();
  std::vector<std::vector<double>> emd(pairs.size()), pca(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t k) {
    const auto& p = pairs[k];
    std::vector<std::vector<double>> orig(n), moved(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = scans[i].signal(p).view();
      const auto a = extract_emd_features(window_view(x, cfg.window), cfg.sift);
      const auto b = extract_emd_features(shifted_window_view(x, cfg.window, shift), cfg.sift);
      orig[i].assign(a.begin(), a.end());
      moved[i].assign(b.begin(), b.end());
    }
    const auto norm = Normalizer::fit<std::vector<double>>(orig);
    const auto model = pca_fit(windowed_matrix(scans, p, cfg.window));
    emd[k].resize(n);
    pca[k].resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto u = norm.apply(orig[i]);
      const auto v = norm.apply(moved[i]);
      double d = 0.0;
      for (std::size_t j = 0; j < u.size(); ++j) d = std::max(d, std::abs(u[j] - v[j]));
      emd[k][i] = d;
      const auto x = scans[i].signal(p).view();
      const auto s = pca_scores(model, window_view(x, cfg.window));
      const auto t = pca_scores(model, shifted_window_view(x, cfg.window, shift));
      double e = 0.0;
      for (std::size_t j = 0; j < s.size(); ++j) e = std::max(e, std::abs(s[j] - t[j]));
      pca[k][i] = e;
    }
  });
  DriftResult r;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      r.emd.push_back(emd[k][i]);
      r.pca.push_back(pca[k][i]);
    }
  if (!r.emd.empty()) {
    for (double v : r.emd) r.emd_mean += v;
    for (double v : r.pca) r.pca_mean += v;
    r.emd_mean /= static_cast<double>(r.emd.size());
    r.pca_mean /= static_cast<double>(r.pca.size());
  }
  return r;
}

namespace detail {

/// Everything one split contributes to the report, per mode.
struct SplitRun {
  struct ModeRun {
    std::string mode;
    RocSweep sweep;
    std::vector<std::optional<AlphaOutcome>> report;  // aligned with report_alphas
    std::vector<std::vector<int>> scalar_members;     // feature indices per report alpha
  };
  std::vector<ModeRun> modes;
  std::vector<int> truth;
  std::vector<int> volunteer;
};

inline std::optional<AlphaOutcome> try_alpha(const ScoredLibrary& sl, std::span<const int> y, double a,
                                             const ExperimentOptions& opt) {
  try {
    return run_alpha(sl, y, a, opt.k, opt.rule);
  } catch (const SelectionError&) {
    return std::nullopt;
  }
}

inline SplitRun run_split(const Dataset& d, const Split& split, const EmdCache& cache, const ExperimentOptions& opt,
                          bool with_scalar) {
  auto ss = split_scans(d, split);
  std::vector<ScanEmd> train_emd, test_emd;
  for (const auto& s : ss.train) train_emd.push_back(cache.at(s));
  // Augmented test copies are unique to this split and are decomposed here.
  const std::size_t base = ss.test.size() - split.augments.size();
  for (std::size_t i = 0; i < base; ++i) test_emd.push_back(cache.at(ss.test[i]));
  test_emd.resize(ss.test.size());
  const auto kept = retained_pairs(ss.train, opt.pipeline);
  parallel_for(ss.test.size() - base,
               [&](std::size_t j) { test_emd[base + j] = scan_emd_features(ss.test[base + j], opt.pipeline, kept); });
  const auto sf = split_features(ss.train, train_emd, ss.test, test_emd, opt.pipeline);

  std::vector<AntennaPairId> pairs;
  for (const auto& pp : sf.pipeline.pairs) pairs.push_back(pp.pair);

  SplitRun run;
  run.truth = sf.y_test;
  run.volunteer = sf.test_volunteer;
  auto evaluate = [&](const std::string& name, Library lib) {
    SplitRun::ModeRun mr;
    mr.mode = name;
    const auto sl = score_library(std::move(lib), sf.test, pairs);
    mr.sweep = roc_sweep(sl, sf.y_test, opt.alphas, opt.k, opt.rule);
    for (double a : opt.report_alphas) {
      mr.report.push_back(try_alpha(sl, sf.y_test, a, opt));
      std::vector<int> feats;
      if (mr.report.back())
        for (auto i : mr.report.back()->selected) feats.push_back(sl.library.entries[i].spec.mode.scalar_index);
      mr.scalar_members.push_back(std::move(feats));
    }
    run.modes.push_back(std::move(mr));
  };
  LibraryOptions lopt = opt.library;
  if (opt.group_folds_by_volunteer) lopt.groups = sf.train_volunteer;
  for (const auto& m : opt.modes) evaluate(m.name(), build_library(sf.train, sf.y_train, opt.grid, m, lopt));
  if (with_scalar) {
    Library all;
    for (int f = 1; f <= static_cast<int>(kEmdFeatures); ++f) {
      auto lib = build_library(sf.train, sf.y_train, opt.grid, FeatureMode::scalar(f), lopt);
      all.entries.insert(all.entries.end(), std::make_move_iterator(lib.entries.begin()),
                         std::make_move_iterator(lib.entries.end()));
    }
    evaluate("scalar", std::move(all));
  }
  return run;
}

}  // namespace detail

/// Accumulates split results at one response attenuation, one dataset at a time, so
/// only one dataset needs to be in memory. `finish` reduces everything into the report.
class ExperimentRunner {
 public:
  ExperimentRunner(ExperimentOptions opt, EmdCache& cache, double gamma)
      : opt_(std::move(opt)), cache_(cache), gamma_(gamma) {}

  /// Runs the listed splits of `d` (in parallel); `scalar` enables the scalar study.
  void add(const Dataset& d, std::span<const Split> splits, std::span<const std::size_t> split_ids, bool scalar) {
    for (int v : d.volunteers()) volunteers_.insert(v);
    cache_.prefetch(d.scans);
    std::vector<detail::SplitRun> runs(split_ids.size());
    parallel_for(split_ids.size(),
                 [&](std::size_t j) { runs[j] = detail::run_split(d, splits[split_ids[j]], cache_, opt_, scalar); });
    for (std::size_t j = 0; j < runs.size(); ++j) {
      jobs_.push_back({d.index, static_cast<int>(split_ids[j])});
      runs_.push_back(std::move(runs[j]));
    }
  }

  void finish(EvalReport& report) const {
    for (int v : volunteers_) report.volunteers.insert(v);
    reduce(report);
  }

 private:
  struct Job {
    int dataset, split;
  };

  void reduce(EvalReport& report) const {
    const auto& runs = runs_;
    const auto& jobs = jobs_;
    const double gamma = gamma_;
    if (runs.empty()) return;
    std::vector<std::string> names;
    for (const auto& r : runs)
      for (const auto& mr : r.modes)
        if (std::find(names.begin(), names.end(), mr.mode) == names.end()) names.push_back(mr.mode);
    auto find_mode = [](const detail::SplitRun& r, const std::string& mode) -> const detail::SplitRun::ModeRun* {
      for (const auto& mr : r.modes)
        if (mr.mode == mode) return &mr;
      return nullptr;
    };
    for (const auto& mode : names) {
      RocCurve curve;
      curve.gamma = gamma;
      curve.mode = mode;
      std::vector<RocPoint> mean_pts;
      for (std::size_t a = 0; a < opt_.alphas.size(); ++a) {
        double pf = 0.0, tpr = 0.0;
        std::size_t n = 0;
        for (const auto& r : runs) {
          const auto* mr = find_mode(r, mode);
          if (!mr) continue;
          if (const auto& o = mr->sweep.outcomes[a]) {
            pf += o->metrics.pf;
            tpr += o->metrics.tpr();
            ++n;
          }
        }
        if (n) mean_pts.push_back({pf / static_cast<double>(n), tpr / static_cast<double>(n)});
      }
      curve.points = clean_roc(mean_pts);
      curve.auc = auc_trapezoid(mean_pts);
      for (const auto& r : runs)
        if (const auto* mr = find_mode(r, mode)) curve.split_auc.push_back(mr->sweep.auc);
      report.rocs.push_back(std::move(curve));

      for (std::size_t j = 0; j < runs.size(); ++j) {
        const auto& r = runs[j];
        const auto* mr = find_mode(r, mode);
        if (!mr) continue;
        for (std::size_t a = 0; a < opt_.report_alphas.size(); ++a) {
          const auto& o = mr->report[a];
          if (!o) continue;
          report.cells.push_back({jobs[j].dataset, jobs[j].split, gamma, mode, opt_.report_alphas[a], o->metrics});
          for (std::size_t i = 0; i < r.truth.size(); ++i)
            report.outcomes.push_back(
                {gamma, mode, opt_.report_alphas[a], r.volunteer[i], r.truth[i], o->predictions[i]});
          if (mode == "scalar")
            for (int f : mr->scalar_members[a]) ++report.scalar_histogram[{opt_.report_alphas[a], f}];
        }
      }
    }
  }

  ExperimentOptions opt_;
  EmdCache& cache_;
  double gamma_;
  std::set<int> volunteers_;
  std::vector<Job> jobs_;
  std::vector<detail::SplitRun> runs_;
};

/// Runs the selected splits of every dataset at one response attenuation and appends the
/// results to `report`. `split_ids[d]` lists split indices of dataset d.
inline void run_experiment(std::span<const Dataset> datasets, std::span<const std::vector<Split>> splits,
                           std::span<const std::vector<std::size_t>> split_ids, const ExperimentOptions& opt,
                           EmdCache& cache, EvalReport& report) {
  if (datasets.empty()) return;
  ExperimentRunner runner(opt, cache, datasets.front().gamma);
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    const bool scalar = opt.scalar && (opt.scalar_datasets == 0 || d < opt.scalar_datasets);
    runner.add(datasets[d], splits[d], split_ids[d], scalar);
  }
  runner.finish(report);
}

/// Evenly spread split indices: floor(k * total / count) for k < count.
inline std::vector<std::size_t> spread_indices(std::size_t total, std::size_t count) {
  if (count == 0 || count >= total) {
    std::vector<std::size_t> all(total);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < count; ++k) out.push_back(k * total / count);
  return out;
}

// ---- report files ----

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace detail

/// Table-style summary: mean and 10%/90% quantiles of pf, pm, average error and e_hat.
inline void write_summary(const EvalReport& r, std::ostream& out) {
  out << "gamma,alpha,mode,cells,pf_mean,pf_q10,pf_q90,pm_mean,pm_q10,pm_q90,avg_error_mean,avg_error_q10,"
         "avg_error_q90,e_hat_mean,e_hat_q10,e_hat_q90,pf_within_alpha_plus_0.1,auc\n";
  std::map<std::tuple<double, double, std::string>, std::vector<const CellResult*>> groups;
  for (const auto& c : r.cells) groups[{c.gamma, c.alpha, c.mode}].push_back(&c);
  for (const auto& [key, cells] : groups) {
    const auto& [gamma, alpha, mode] = key;
    std::vector<double> pf, pm, avg, eh;
    std::size_t ok = 0;
    for (const auto* c : cells) {
      pf.push_back(c->metrics.pf);
      pm.push_back(c->metrics.pm);
      avg.push_back(c->metrics.avg_error);
      eh.push_back(c->metrics.e_hat);
      ok += c->metrics.pf <= alpha + 0.1 + 1e-12;
    }
    auto stats = [&](const std::vector<double>& v) {
      double m = 0.0;
      for (double x : v) m += x;
      m /= static_cast<double>(v.size());
      return detail::fmt(m) + "," + detail::fmt(quantile(v, 0.1)) + "," + detail::fmt(quantile(v, 0.9));
    };
    const auto* roc = r.roc(mode, gamma);
    out << detail::fmt_g(gamma) << "," << detail::fmt_g(alpha) << "," << mode << "," << cells.size() << "," << stats(pf)
        << "," << stats(pm) << "," << stats(avg) << "," << stats(eh) << ","
        << detail::fmt(static_cast<double>(ok) / static_cast<double>(cells.size())) << ","
        << (roc ? detail::fmt(roc->auc) : std::string("n/a")) << "\n";
  }
}

inline void write_roc(const EvalReport& r, const std::string& mode, std::ostream& out) {
  out << "gamma,pf,tpr,auc\n";
  for (const auto& c : r.rocs) {
    if (c.mode != mode) continue;
    for (const auto& p : c.points)
      out << detail::fmt_g(c.gamma) << "," << detail::fmt(p.pf) << "," << detail::fmt(p.tpr) << ","
          << detail::fmt(c.auc) << "\n";
  }
}

inline void write_auc(const EvalReport& r, std::ostream& out) {
  out << "gamma,mode,auc,splits,split_auc_mean,split_auc_q10,split_auc_q90\n";
  for (const auto& c : r.rocs) {
    double m = 0.0;
    for (double v : c.split_auc) m += v;
    if (!c.split_auc.empty()) m /= static_cast<double>(c.split_auc.size());
    out << detail::fmt_g(c.gamma) << "," << c.mode << "," << detail::fmt(c.auc) << "," << c.split_auc.size() << ","
        << detail::fmt(m) << "," << detail::fmt(quantile(c.split_auc, 0.1)) << ","
        << detail::fmt(quantile(c.split_auc, 0.9)) << "\n";
  }
}

inline void write_per_volunteer(const EvalReport& r, std::ostream& out) {
  out << "gamma,mode,alpha,volunteer,scans,error\n";
  for (const auto& e : per_volunteer_errors(r.outcomes, r.volunteers))
    out << detail::fmt_g(e.gamma) << "," << e.mode << "," << detail::fmt_g(e.alpha) << "," << e.volunteer << ","
        << e.scans << "," << (e.error ? detail::fmt(*e.error) : std::string("n/a")) << "\n";
}

inline std::string emd_feature_name(int f) {
  static const char* stat[] = {"mean", "std", "kurtosis", "smoothness"};
  return "imf" + std::to_string((f - 1) / 4 + 1) + "_" + stat[(f - 1) % 4];
}

inline void write_histogram(const EvalReport& r, std::span<const double> alphas, std::ostream& out) {
  out << "alpha,feature,name,count,fraction\n";
  for (double a : alphas) {
    std::size_t total = 0;
    for (int f = 1; f <= static_cast<int>(kEmdFeatures); ++f)
      if (auto it = r.scalar_histogram.find({a, f}); it != r.scalar_histogram.end()) total += it->second;
    for (int f = 1; f <= static_cast<int>(kEmdFeatures); ++f) {
      std::size_t c = 0;
      if (auto it = r.scalar_histogram.find({a, f}); it != r.scalar_histogram.end()) c = it->second;
      out << detail::fmt_g(a) << "," << f << "," << emd_feature_name(f) << "," << c << ","
          << detail::fmt(total ? static_cast<double>(c) / static_cast<double>(total) : 0.0) << "\n";
    }
  }
}

}  // namespace emdscan
