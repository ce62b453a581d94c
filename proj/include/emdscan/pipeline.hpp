#pragma once

// Per-split feature extraction: antenna-pair filtering, train-fitted EMD
// normalisation and PCA, producing one 50-column row (20 EMD | 30 PCA) per
// scan and retained pair.

#include <algorithm>
#include <map>
#include <span>
#include <vector>

#include "emdscan/ensemble.hpp"
#include "emdscan/features.hpp"
#include "emdscan/parallel.hpp"
#include "emdscan/pca.hpp"
#include "emdscan/signal.hpp"

namespace emdscan {

struct PipelineConfig {
  WindowSpec window{61, 600};
  double pair_threshold = 0.020;  // volts
  int max_pairs = 0;              // 0: keep every pair above threshold
  SiftConfig sift;
};

/// Raw (unnormalised) EMD features of one scan, per pair.
using ScanEmd = std::map<AntennaPairId, EmdFeatures>;

inline ScanEmd scan_emd_features(const Scan& s, const PipelineConfig& cfg, std::span<const AntennaPairId> pairs = {}) {
  ScanEmd out;
  auto one = [&](const AntennaPairId& p) {
    out[p] = extract_emd_features(window_view(s.signal(p).view(), cfg.window), cfg.sift);
  };
  if (pairs.empty())
    for (const auto& [p, _] : s.signals) one(p);
  else
    for (const auto& p : pairs) one(p);
  return out;
}

inline std::vector<ScanEmd> scans_emd_features(std::span<const Scan> scans, const PipelineConfig& cfg,
                                               std::span<const AntennaPairId> pairs = {}) {
  std::vector<ScanEmd> out(scans.size());
  parallel_for(scans.size(), [&](std::size_t i) { out[i] = scan_emd_features(scans[i], cfg, pairs); });
  return out;
}

/// Pairs above the peak threshold on the training scans; with max_pairs > 0 only the
/// strongest ones (by median peak, then pair order) are kept.
inline std::vector<AntennaPairId> retained_pairs(std::span<const Scan> train, const PipelineConfig& cfg) {
  const auto peaks = median_peaks(train, cfg.window);
  std::vector<std::pair<double, AntennaPairId>> kept;
  for (const auto& [p, med] : peaks)
    if (med >= cfg.pair_threshold) kept.emplace_back(med, p);
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  if (cfg.max_pairs > 0 && kept.size() > static_cast<std::size_t>(cfg.max_pairs))
    kept.resize(static_cast<std::size_t>(cfg.max_pairs));
  std::vector<AntennaPairId> out;
  for (const auto& [_, p] : kept) out.push_back(p);
  std::sort(out.begin(), out.end());
  return out;
}

struct PairPipeline {
  AntennaPairId pair;
  Normalizer emd_norm;
  PcaModel pca;
};

/// Everything fitted on training data that turns a raw scan into feature rows.
struct FeaturePipeline {
  PipelineConfig config;
  std::vector<PairPipeline> pairs;

  std::vector<double> row(const PairPipeline& pp, const Scan& s, const EmdFeatures& raw_emd) const {
    std::vector<double> r(kCombinedFeatures);
    const auto e = pp.emd_norm.apply(std::vector<double>(raw_emd.begin(), raw_emd.end()));
    std::copy(e.begin(), e.end(), r.begin());
    const auto sc = pca_scores(pp.pca, window_view(s.signal(pp.pair).view(), config.window));
    std::copy(sc.begin(), sc.end(), r.begin() + static_cast<long>(kEmdFeatures));
    return r;
  }

  /// Normalised 50-dim features for every retained pair of `s`.
  std::map<AntennaPairId, std::vector<double>> features(const Scan& s, const ScanEmd* raw = nullptr) const {
    std::map<AntennaPairId, std::vector<double>> out;
    for (const auto& pp : pairs) {
      const EmdFeatures emd =
          raw ? raw->at(pp.pair)
              : extract_emd_features(window_view(s.signal(pp.pair).view(), config.window), config.sift);
      out[pp.pair] = row(pp, s, emd);
    }
    return out;
  }
};

inline Eigen::MatrixXd windowed_matrix(std::span<const Scan> scans, const AntennaPairId& p, const WindowSpec& w) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(scans.size()), static_cast<Eigen::Index>(w.length()));
  for (std::size_t i = 0; i < scans.size(); ++i) {
    const auto v = window_view(scans[i].signal(p).view(), w);
    for (std::size_t k = 0; k < v.size(); ++k) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v[k];
  }
  return x;
}

inline FeaturePipeline fit_pipeline(std::span<const Scan> train, std::span<const ScanEmd> train_emd,
                                    const PipelineConfig& cfg, bool with_pca = true) {
  FeaturePipeline fp;
  fp.config = cfg;
  const auto pairs = retained_pairs(train, cfg);
  fp.pairs.resize(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t k) {
    auto& pp = fp.pairs[k];
    pp.pair = pairs[k];
    std::vector<std::vector<double>> rows;
    rows.reserve(train.size());
    for (const auto& e : train_emd) {
      const auto& f = e.at(pp.pair);
      rows.emplace_back(f.begin(), f.end());
    }
    pp.emd_norm = Normalizer::fit<std::vector<double>>(rows);
    if (with_pca) pp.pca = pca_fit(windowed_matrix(train, pp.pair, cfg.window));
  });
  return fp;
}

inline int label_sign(Label l) { return l == Label::Tumour ? 1 : -1; }

/// Feature rows of one split, one 50-column matrix per retained pair.
struct SplitFeatures {
  FeaturePipeline pipeline;
  std::vector<PairTrainingData> train;  // aligned with pipeline.pairs
  std::vector<RowMatrix> test;
  std::vector<int> y_train;
  std::vector<int> y_test;
  std::vector<int> train_volunteer;
  std::vector<int> test_volunteer;
};

inline RowMatrix feature_rows(const FeaturePipeline& fp, const PairPipeline& pp, std::span<const Scan> scans,
                              std::span<const ScanEmd> emd) {
  RowMatrix m(static_cast<Eigen::Index>(scans.size()), static_cast<Eigen::Index>(kCombinedFeatures));
  for (std::size_t i = 0; i < scans.size(); ++i) {
    const auto r = fp.row(pp, scans[i], emd[i].at(pp.pair));
    for (std::size_t k = 0; k < r.size(); ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = r[k];
  }
  return m;
}

inline SplitFeatures split_features(std::span<const Scan> train, std::span<const ScanEmd> train_emd,
                                    std::span<const Scan> test, std::span<const ScanEmd> test_emd,
                                    const PipelineConfig& cfg) {
  SplitFeatures sf;
  sf.pipeline = fit_pipeline(train, train_emd, cfg);
  for (const auto& s : train) {
    sf.y_train.push_back(label_sign(s.label));
    sf.train_volunteer.push_back(s.volunteer);
  }
  for (const auto& s : test) {
    sf.y_test.push_back(label_sign(s.label));
    sf.test_volunteer.push_back(s.volunteer);
  }
  const auto& pairs = sf.pipeline.pairs;
  sf.train.resize(pairs.size());
  sf.test.resize(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t k) {
    sf.train[k] = {pairs[k].pair, feature_rows(sf.pipeline, pairs[k], train, train_emd)};
    sf.test[k] = feature_rows(sf.pipeline, pairs[k], test, test_emd);
  });
  return sf;
}

}  // namespace emdscan
