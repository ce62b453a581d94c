#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "emdscan/error.hpp"
#include "emdscan/features.hpp"
#include "emdscan/pca.hpp"
#include "emdscan/signal.hpp"
#include "emdscan/svm.hpp"

namespace emdscan {

inline constexpr std::size_t kCombinedFeatures = kEmdFeatures + kPcaScores;  // 50

/// Which slice of a pair's 50-dim (20 EMD | 30 PCA) feature vector a base model sees.
struct FeatureMode {
  enum class Kind { Emd, Pca, Combined, Scalar };
  Kind kind = Kind::Combined;
  int scalar_index = 0;  // 1..20, only for Scalar

  static FeatureMode emd() { return {Kind::Emd, 0}; }
  static FeatureMode pca() { return {Kind::Pca, 0}; }
  static FeatureMode combined() { return {Kind::Combined, 0}; }
  static FeatureMode scalar(int index) {
    if (index < 1 || index > static_cast<int>(kEmdFeatures))
      throw std::invalid_argument("scalar feature index must lie in [1, 20]");
    return {Kind::Scalar, index};
  }

  std::size_t first_column() const {
    switch (kind) {
      case Kind::Emd:
        return 0;
      case Kind::Pca:
        return kEmdFeatures;
      case Kind::Combined:
        return 0;
      case Kind::Scalar:
        return static_cast<std::size_t>(scalar_index - 1);
    }
    return 0;
  }

  std::size_t width() const {
    switch (kind) {
      case Kind::Emd:
        return kEmdFeatures;
      case Kind::Pca:
        return kPcaScores;
      case Kind::Combined:
        return kCombinedFeatures;
      case Kind::Scalar:
        return 1;
    }
    return 0;
  }

  std::string name() const {
    switch (kind) {
      case Kind::Emd:
        return "emd";
      case Kind::Pca:
        return "pca";
      case Kind::Combined:
        return "combined";
      case Kind::Scalar:
        return "scalar" + std::to_string(scalar_index);
    }
    return {};
  }

  static FeatureMode parse(const std::string& s) {
    if (s == "emd") return emd();
    if (s == "pca") return pca();
    if (s == "combined") return combined();
    if (s.rfind("scalar", 0) == 0 && s.size() > 6) return scalar(std::stoi(s.substr(6)));
    throw std::invalid_argument("unknown feature mode '" + s + "'");
  }

  auto operator<=>(const FeatureMode&) const = default;
};

inline RowMatrix select_columns(const RowMatrix& full, const FeatureMode& mode) {
  if (static_cast<std::size_t>(full.cols()) != kCombinedFeatures)
    throw std::invalid_argument("expected 50 feature columns");
  return full.middleCols(static_cast<Eigen::Index>(mode.first_column()), static_cast<Eigen::Index>(mode.width()));
}

/// e = max(pf - alpha, 0) / alpha + pm
inline double np_measure(double pf, double pm, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in (0, 1]");
  if (!(pf >= 0.0 && pf <= 1.0 && pm >= 0.0 && pm <= 1.0))
    throw std::invalid_argument("error rates must lie in [0, 1]");
  return std::max(pf - alpha, 0.0) / alpha + pm;
}

struct BaseModelSpec {
  AntennaPairId pair;
  SvmParams params;
  FeatureMode mode;
};

/// One base model with its error rates estimated on the training data.
struct LibraryEntry {
  BaseModelSpec spec;
  std::shared_ptr<const SvmModel> model;  // null when training was infeasible
  double pf = 1.0;
  double pm = 1.0;

  bool available() const noexcept { return model != nullptr; }
  double e_hat(double alpha) const {
    return available() ? np_measure(pf, pm, alpha) : std::numeric_limits<double>::infinity();
  }
};

struct NuGrid {
  std::vector<double> nu_plus;
  std::vector<double> nu_minus;
  double gamma = 1.0;

  std::size_t size() const noexcept { return nu_plus.size() * nu_minus.size(); }

  /// 1e-5, 3e-5, 1e-4, 3e-4, 0.001, 0.003, 0.01, 0.03, 0.1, 0.2, ..., 1 (18 values).
  static std::vector<double> full_values() {
    std::vector<double> v = {1e-5, 3e-5, 1e-4, 3e-4, 0.001, 0.003, 0.01, 0.03};
    for (int k = 1; k <= 10; ++k) v.push_back(k / 10.0);
    return v;
  }
  static NuGrid full() { return {full_values(), full_values(), 1.0}; }
};

/// Training data of one antenna pair: 50-column feature rows and +1/-1 labels.
struct PairTrainingData {
  AntennaPairId pair;
  RowMatrix features;
};

struct LibraryOptions {
  int cv_folds = 0;         // 0: error rates on the training data itself; k >= 2: k-fold estimate
  std::vector<int> groups;  // optional group id per training row (e.g. volunteer); whole groups share a fold
  SolverOptions solver;
};

struct Library {
  std::vector<LibraryEntry> entries;
};

namespace detail {

struct Rates {
  double pf = 1.0;
  double pm = 1.0;
};

inline Rates error_rates(std::span<const int> truth, std::span<const int> pred) {
  std::size_t neg = 0, pos = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == 1) {
      ++pos;
      fn += pred[i] != 1;
    } else {
      ++neg;
      fp += pred[i] == 1;
    }
  }
  return {neg ? static_cast<double>(fp) / static_cast<double>(neg) : 0.0,
          pos ? static_cast<double>(fn) / static_cast<double>(pos) : 0.0};
}

inline std::vector<int> predict_rows(const SvmModel& m, const RowMatrix& x) {
  const Eigen::VectorXd f = m.decision(x);
  std::vector<int> out(static_cast<std::size_t>(f.size()));
  for (Eigen::Index i = 0; i < f.size(); ++i) out[static_cast<std::size_t>(i)] = f(i) > 0.0 ? 1 : -1;
  return out;
}

/// Stratified fold id per row: the k-th row of each class goes to fold k mod folds.
inline std::vector<int> stratified_folds(std::span<const int> y, int folds) {
  std::vector<int> out(y.size());
  int pos = 0, neg = 0;
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = (y[i] == 1 ? pos++ : neg++) % folds;
  return out;
}

/// Fold id per row when rows come in groups: the k-th distinct group (ascending id) goes to fold k mod folds.
inline std::vector<int> grouped_folds(std::span<const int> groups, int folds) {
  std::vector<int> ids(groups.begin(), groups.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::vector<int> out(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i)
    out[i] = static_cast<int>(std::lower_bound(ids.begin(), ids.end(), groups[i]) - ids.begin()) % folds;
  return out;
}

}  // namespace detail

/// Trains one base model per (nu+, nu-) for a single pair and feature mode.
inline std::vector<LibraryEntry> build_pair_library(const PairTrainingData& data, std::span<const int> y,
                                                    const NuGrid& grid, const FeatureMode& mode,
                                                    const LibraryOptions& opt = {}) {
  const RowMatrix x = select_columns(data.features, mode);
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw std::invalid_argument("row count does not match labels");
  const Eigen::MatrixXd kernel = rbf_kernel(x, x, grid.gamma);

  std::vector<int> fold;
  std::vector<RowMatrix> fold_train, fold_test;
  std::vector<std::vector<int>> fold_ytrain, fold_ytest;
  std::vector<Eigen::MatrixXd> fold_kernel;
  if (opt.cv_folds >= 2) {
    if (!opt.groups.empty() && opt.groups.size() != y.size())
      throw std::invalid_argument("group ids do not match the training rows");
    fold = opt.groups.empty() ? detail::stratified_folds(y, opt.cv_folds)
                              : detail::grouped_folds(opt.groups, opt.cv_folds);
    for (int f = 0; f < opt.cv_folds; ++f) {
      std::vector<Eigen::Index> tr, te;
      std::vector<int> ytr, yte;
      for (std::size_t i = 0; i < y.size(); ++i) {
        if (fold[i] == f) {
          te.push_back(static_cast<Eigen::Index>(i));
          yte.push_back(y[i]);
        } else {
          tr.push_back(static_cast<Eigen::Index>(i));
          ytr.push_back(y[i]);
        }
      }
      fold_train.emplace_back(x(tr, Eigen::all));
      fold_test.emplace_back(x(te, Eigen::all));
      fold_kernel.emplace_back(kernel(tr, tr));
      fold_ytrain.push_back(std::move(ytr));
      fold_ytest.push_back(std::move(yte));
    }
  }

  std::vector<LibraryEntry> out;
  out.reserve(grid.size());
  for (double nu_p : grid.nu_plus) {
    for (double nu_m : grid.nu_minus) {
      LibraryEntry e;
      e.spec = {data.pair, {nu_p, nu_m, grid.gamma}, mode};
      try {
        auto model = std::make_shared<const SvmModel>(train_svm(x, y, kernel, e.spec.params, opt.solver));
        if (opt.cv_folds >= 2) {
          std::vector<int> truth, pred;
          for (int f = 0; f < opt.cv_folds; ++f) {
            if (fold_ytest[static_cast<std::size_t>(f)].empty()) continue;
            const auto sub =
                train_svm(fold_train[static_cast<std::size_t>(f)], fold_ytrain[static_cast<std::size_t>(f)],
                          fold_kernel[static_cast<std::size_t>(f)], e.spec.params, opt.solver);
            const auto p = detail::predict_rows(sub, fold_test[static_cast<std::size_t>(f)]);
            truth.insert(truth.end(), fold_ytest[static_cast<std::size_t>(f)].begin(),
                         fold_ytest[static_cast<std::size_t>(f)].end());
            pred.insert(pred.end(), p.begin(), p.end());
          }
          const auto r = detail::error_rates(truth, pred);
          e.pf = r.pf;
          e.pm = r.pm;
        } else {
          const auto r = detail::error_rates(y, detail::predict_rows(*model, x));
          e.pf = r.pf;
          e.pm = r.pm;
        }
        e.model = std::move(model);
      } catch (const TrainingError&) {
        e.model = nullptr;
      }
      out.push_back(std::move(e));
    }
  }
  return out;
}

inline Library build_library(std::span<const PairTrainingData> pairs, std::span<const int> y, const NuGrid& grid,
                             const FeatureMode& mode, const LibraryOptions& opt = {}) {
  if (pairs.empty()) throw ConfigError("no antenna pairs retained: the model library would be empty");
  Library lib;
  for (const auto& p : pairs) {
    auto part = build_pair_library(p, y, grid, mode, opt);
    lib.entries.insert(lib.entries.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return lib;
}

enum class VoteRule { Hard, Score };

struct EnsembleMember {
  BaseModelSpec spec;
  std::shared_ptr<const SvmModel> model;
  double pf = 0.0;
  double pm = 0.0;
  double e_hat = 0.0;
};

struct Ensemble {
  std::vector<EnsembleMember> members;  // ascending e_hat
  double alpha = 0.0;
  VoteRule rule = VoteRule::Hard;
};

/// Order used by selection: e_hat, then pf, pair, scalar index, nu+, nu-.
inline bool ranks_before(const LibraryEntry& a, double ea, const LibraryEntry& b, double eb) {
  return std::tuple(ea, a.pf, a.spec.pair, a.spec.mode.scalar_index, a.spec.params.nu_plus, a.spec.params.nu_minus) <
         std::tuple(eb, b.pf, b.spec.pair, b.spec.mode.scalar_index, b.spec.params.nu_plus, b.spec.params.nu_minus);
}

/// Indices of the k best library entries for `alpha`, finite e_hat only.
inline std::vector<std::size_t> select_indices(std::span<const LibraryEntry> lib, double alpha, std::size_t k) {
  std::vector<double> e(lib.size());
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < lib.size(); ++i) {
    e[i] = lib[i].e_hat(alpha);
    if (std::isfinite(e[i])) idx.push_back(i);
  }
  if (idx.empty()) throw SelectionError("no base model with a finite Neyman-Pearson measure");
  const std::size_t take = std::min(k, idx.size());
  auto cmp = [&](std::size_t a, std::size_t b) { return ranks_before(lib[a], e[a], lib[b], e[b]); };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(take), idx.end(), cmp);
  idx.resize(take);
  return idx;
}

inline Ensemble select(const Library& lib, double alpha, std::size_t k = 100, VoteRule rule = VoteRule::Hard) {
  Ensemble ens;
  ens.alpha = alpha;
  ens.rule = rule;
  for (auto i : select_indices(lib.entries, alpha, k)) {
    const auto& e = lib.entries[i];
    ens.members.push_back({e.spec, e.model, e.pf, e.pm, e.e_hat(alpha)});
  }
  return ens;
}

struct Vote {
  Label label = Label::Healthy;
  double score = 0.0;
};

/// Mean of member votes; tumour iff the mean is > 0.
inline Vote combine_votes(std::span<const double> decisions, VoteRule rule) {
  if (decisions.empty()) throw std::invalid_argument("no votes to combine");
  double sum = 0.0;
  for (double f : decisions) sum += rule == VoteRule::Hard ? (f > 0.0 ? 1.0 : -1.0) : f;
  const double score = sum / static_cast<double>(decisions.size());
  return {score > 0.0 ? Label::Tumour : Label::Healthy, score};
}

/// `features` maps each pair to its normalised 50-dim feature vector for one scan.
inline Vote classify(const Ensemble& ens, const std::map<AntennaPairId, std::vector<double>>& features) {
  std::string missing;
  for (const auto& m : ens.members)
    if (!features.count(m.spec.pair) && missing.find(m.spec.pair.str()) == std::string::npos)
      missing += (missing.empty() ? "" : ", ") + m.spec.pair.str();
  if (!missing.empty()) throw std::invalid_argument("missing features for pairs: " + missing);
  std::vector<double> f;
  f.reserve(ens.members.size());
  for (const auto& m : ens.members) {
    const auto& v = features.at(m.spec.pair);
    if (v.size() != kCombinedFeatures)
      throw std::invalid_argument("expected 50 features for pair " + m.spec.pair.str());
    const std::span<const double> slice(v.data() + m.spec.mode.first_column(), m.spec.mode.width());
    f.push_back(m.model->decision(slice));
  }
  return combine_votes(f, ens.rule);
}

}  // namespace emdscan
