#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "emdscan/ensemble.hpp"
#include "emdscan/error.hpp"

namespace emdscan {

struct SplitMetrics {
  double pf = 0.0;         // false positives / negatives
  double pm = 0.0;         // false negatives / positives
  double avg_error = 0.0;  // (FP + FN) / n
  double e_hat = 0.0;
  std::size_t negatives = 0;
  std::size_t positives = 0;
  std::size_t false_pos = 0;
  std::size_t false_neg = 0;

  double tpr() const { return 1.0 - pm; }
};

/// truth/pred hold +1 (tumour) / -1 (healthy).
inline SplitMetrics evaluate_predictions(std::span<const int> truth, std::span<const int> pred, double alpha) {
  if (truth.size() != pred.size()) throw std::invalid_argument("prediction count does not match labels");
  SplitMetrics m;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == 1) {
      ++m.positives;
      m.false_neg += pred[i] != 1;
    } else {
      ++m.negatives;
      m.false_pos += pred[i] == 1;
    }
  }
  if (m.positives == 0 || m.negatives == 0)
    throw EvaluationError("test set must contain both healthy and tumour scans");
  m.pf = static_cast<double>(m.false_pos) / static_cast<double>(m.negatives);
  m.pm = static_cast<double>(m.false_neg) / static_cast<double>(m.positives);
  m.avg_error = static_cast<double>(m.false_pos + m.false_neg) / static_cast<double>(truth.size());
  m.e_hat = np_measure(m.pf, m.pm, alpha);
  return m;
}

inline SplitMetrics evaluate_split(const Ensemble& ens,
                                   std::span<const std::map<AntennaPairId, std::vector<double>>> test,
                                   std::span<const int> truth) {
  std::vector<int> pred;
  pred.reserve(test.size());
  for (const auto& f : test) pred.push_back(classify(ens, f).label == Label::Tumour ? 1 : -1);
  return evaluate_predictions(truth, pred, ens.alpha);
}

struct RocPoint {
  double pf = 0.0;
  double tpr = 0.0;
  bool operator==(const RocPoint&) const = default;
};

/// Sorted by pf, one point per pf (the highest tpr).
inline std::vector<RocPoint> clean_roc(std::vector<RocPoint> pts) {
  std::sort(pts.begin(), pts.end(),
            [](const RocPoint& a, const RocPoint& b) { return a.pf < b.pf || (a.pf == b.pf && a.tpr > b.tpr); });
  std::vector<RocPoint> out;
  for (const auto& p : pts)
    if (out.empty() || p.pf != out.back().pf) out.push_back(p);
  return out;
}

/// Trapezoid area with (0,0) and (1,1) anchors added.
inline double auc_trapezoid(std::vector<RocPoint> pts) {
  pts.push_back({0.0, 0.0});
  pts.push_back({1.0, 1.0});
  const auto c = clean_roc(std::move(pts));
  double area = 0.0;
  for (std::size_t i = 1; i < c.size(); ++i) area += (c[i].pf - c[i - 1].pf) * 0.5 * (c[i].tpr + c[i - 1].tpr);
  return area;
}

/// Linear interpolation between order statistics.
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// `count` evenly spaced values from 0 to 1 inclusive.
inline std::vector<double> alpha_grid(int count) {
  if (count < 2) throw std::invalid_argument("alpha grid needs at least 2 values");
  std::vector<double> a;
  for (int i = 0; i < count; ++i) a.push_back(static_cast<double>(i) / (count - 1));
  return a;
}

/// A model library together with every member's decision value on every test row,
/// so that re-selecting for many alphas needs no further kernel evaluations.
struct ScoredLibrary {
  Library library;
  std::vector<Eigen::VectorXd> test_decisions;  // per entry; empty when unavailable
};

inline ScoredLibrary score_library(Library lib, std::span<const RowMatrix> test_by_pair,
                                   std::span<const AntennaPairId> pairs) {
  ScoredLibrary out;
  out.test_decisions.resize(lib.entries.size());
  std::map<AntennaPairId, std::size_t> where;
  for (std::size_t k = 0; k < pairs.size(); ++k) where[pairs[k]] = k;
  for (std::size_t i = 0; i < lib.entries.size(); ++i) {
    const auto& e = lib.entries[i];
    if (!e.available()) continue;
    const auto& x = test_by_pair[where.at(e.spec.pair)];
    out.test_decisions[i] = e.model->decision(select_columns(x, e.spec.mode));
  }
  out.library = std::move(lib);
  return out;
}

struct AlphaOutcome {
  double alpha = 0.0;
  std::vector<std::size_t> selected;  // library indices
  std::vector<int> predictions;       // per test row
  SplitMetrics metrics;
};

/// Selects the top-k ensemble for `alpha` and classifies every test row.
inline AlphaOutcome run_alpha(const ScoredLibrary& sl, std::span<const int> truth, double alpha, std::size_t k,
                              VoteRule rule) {
  AlphaOutcome out;
  out.alpha = alpha;
  out.selected = select_indices(sl.library.entries, alpha, k);
  const std::size_t n = truth.size();
  std::vector<double> votes(out.selected.size());
  out.predictions.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t m = 0; m < out.selected.size(); ++m)
      votes[m] = sl.test_decisions[out.selected[m]](static_cast<Eigen::Index>(r));
    out.predictions[r] = combine_votes(votes, rule).label == Label::Tumour ? 1 : -1;
  }
  out.metrics = evaluate_predictions(truth, out.predictions, alpha);
  return out;
}

struct RocSweep {
  std::vector<std::optional<AlphaOutcome>> outcomes;  // per alpha; empty where selection failed
  std::vector<RocPoint> roc;                          // cleaned
  double auc = 0.0;
};

/// One freshly selected ensemble per alpha; alphas where selection is impossible are skipped.
inline RocSweep roc_sweep(const ScoredLibrary& sl, std::span<const int> truth, std::span<const double> alphas,
                          std::size_t k, VoteRule rule) {
  RocSweep s;
  std::vector<RocPoint> pts;
  for (double a : alphas) {
    if (!(a > 0.0)) {
      s.outcomes.emplace_back();
      continue;
    }
    try {
      auto o = run_alpha(sl, truth, a, k, rule);
      pts.push_back({o.metrics.pf, o.metrics.tpr()});
      s.outcomes.emplace_back(std::move(o));
    } catch (const SelectionError&) {
      s.outcomes.emplace_back();
    }
  }
  if (pts.size() < 2 && alphas.size() >= 2 && pts.empty())
    throw SelectionError("alpha sweep produced no operating points");
  s.roc = clean_roc(pts);
  s.auc = auc_trapezoid(pts);
  return s;
}

}  // namespace emdscan
