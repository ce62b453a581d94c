#pragma once

// model.ens: a selected ensemble together with the train-fitted feature pipeline of
// the pairs it uses, as one JSON document. Doubles round-trip exactly.

#include <filesystem>
#include <json.hpp>
#include <memory>
#include <set>
#include <string>

#include "emdscan/data_io.hpp"
#include "emdscan/ensemble.hpp"
#include "emdscan/pipeline.hpp"

namespace emdscan {

inline constexpr const char* kModelFormat = "emdscan-ensemble-1";

struct TrainedModel {
  FeaturePipeline pipeline;  // only the pairs used by the ensemble
  Ensemble ensemble;
  std::string features;  // feature mode name the ensemble was selected from
};

namespace detail {

inline nlohmann::json matrix_json(const auto& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(std::move(row));
  }
  return rows;
}

template <class M>
M matrix_from(const nlohmann::json& j, Eigen::Index cols) {
  M m(static_cast<Eigen::Index>(j.size()), cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const auto row = j[static_cast<std::size_t>(r)].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != cols) throw std::runtime_error("ragged matrix in model file");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

inline std::vector<double> vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline Eigen::VectorXd eigen_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

inline nlohmann::json sift_json(const SiftConfig& c) {
  return {{"n_imf_max", c.n_imf_max},
          {"max_sift_iters", c.max_sift_iters},
          {"c2_tol", c.c2_tol},
          {"boundary", c.boundary == BoundaryPolicy::Mirror ? "mirror" : "none"},
          {"interpolation", c.interpolation == Interpolation::NaturalCubic ? "cubic" : "linear"}};
}

inline SiftConfig sift_from(const nlohmann::json& j) {
  SiftConfig c;
  c.n_imf_max = j.at("n_imf_max").get<int>();
  c.max_sift_iters = j.at("max_sift_iters").get<int>();
  c.c2_tol = j.at("c2_tol").get<double>();
  c.boundary = j.at("boundary").get<std::string>() == "mirror" ? BoundaryPolicy::Mirror : BoundaryPolicy::None;
  c.interpolation =
      j.at("interpolation").get<std::string>() == "cubic" ? Interpolation::NaturalCubic : Interpolation::Linear;
  c.validate();
  return c;
}

inline nlohmann::json model_json(const TrainedModel& m) {
  nlohmann::json j;
  j["format"] = kModelFormat;
  j["features"] = m.features;
  j["alpha"] = m.ensemble.alpha;
  j["rule"] = m.ensemble.rule == VoteRule::Hard ? "hard" : "score";
  const auto& cfg = m.pipeline.config;
  j["window"] = {cfg.window.start, cfg.window.end};
  j["sift"] = sift_json(cfg.sift);
  auto& pairs = j["pairs"] = nlohmann::json::array();
  for (const auto& pp : m.pipeline.pairs)
    pairs.push_back({{"pair", pp.pair.str()},
                     {"emd_lo", pp.emd_norm.lower()},
                     {"emd_hi", pp.emd_norm.upper()},
                     {"pca",
                      {{"mean", detail::vec(pp.pca.mean)},
                       {"components", detail::matrix_json(pp.pca.components)},
                       {"explained", detail::vec(pp.pca.explained)},
                       {"min1", pp.pca.min1},
                       {"max1", pp.pca.max1}}}});
  auto& members = j["members"] = nlohmann::json::array();
  for (const auto& e : m.ensemble.members)
    members.push_back({{"pair", e.spec.pair.str()},
                       {"mode", e.spec.mode.name()},
                       {"nu_plus", e.spec.params.nu_plus},
                       {"nu_minus", e.spec.params.nu_minus},
                       {"gamma", e.spec.params.gamma},
                       {"pf", e.pf},
                       {"pm", e.pm},
                       {"e_hat", e.e_hat},
                       {"bias", e.model->bias},
                       {"rho", e.model->rho},
                       {"coef", detail::vec(e.model->coef)},
                       {"support", detail::matrix_json(e.model->support)}});
  return j;
}

inline TrainedModel model_from(const nlohmann::json& j) {
  if (j.value("format", std::string{}) != kModelFormat) throw std::runtime_error("not an ensemble model file");
  TrainedModel m;
  m.features = j.at("features").get<std::string>();
  m.ensemble.alpha = j.at("alpha").get<double>();
  m.ensemble.rule = j.at("rule").get<std::string>() == "hard" ? VoteRule::Hard : VoteRule::Score;
  auto& cfg = m.pipeline.config;
  const auto w = j.at("window").get<std::vector<std::size_t>>();
  if (w.size() != 2) throw std::runtime_error("window needs 2 bounds");
  cfg.window = {w[0], w[1]};
  cfg.sift = sift_from(j.at("sift"));
  for (const auto& p : j.at("pairs")) {
    PairPipeline pp;
    pp.pair = AntennaPairId::parse(p.at("pair").get<std::string>());
    pp.emd_norm = Normalizer(p.at("emd_lo").get<std::vector<double>>(), p.at("emd_hi").get<std::vector<double>>());
    const auto& pc = p.at("pca");
    pp.pca.mean = detail::eigen_vec(pc.at("mean"));
    pp.pca.components = detail::matrix_from<Eigen::MatrixXd>(pc.at("components"), pp.pca.mean.size());
    pp.pca.explained = detail::eigen_vec(pc.at("explained"));
    pp.pca.min1 = pc.at("min1").get<double>();
    pp.pca.max1 = pc.at("max1").get<double>();
    m.pipeline.pairs.push_back(std::move(pp));
  }
  for (const auto& e : j.at("members")) {
    EnsembleMember mem;
    mem.spec.pair = AntennaPairId::parse(e.at("pair").get<std::string>());
    mem.spec.mode = FeatureMode::parse(e.at("mode").get<std::string>());
    mem.spec.params = {e.at("nu_plus").get<double>(), e.at("nu_minus").get<double>(), e.at("gamma").get<double>()};
    mem.pf = e.at("pf").get<double>();
    mem.pm = e.at("pm").get<double>();
    mem.e_hat = e.at("e_hat").get<double>();
    auto model = std::make_shared<SvmModel>();
    model->params = mem.spec.params;
    model->bias = e.at("bias").get<double>();
    model->rho = e.at("rho").get<double>();
    model->coef = detail::eigen_vec(e.at("coef"));
    model->support = detail::matrix_from<RowMatrix>(e.at("support"), static_cast<Eigen::Index>(mem.spec.mode.width()));
    if (model->support.rows() != model->coef.size())
      throw std::runtime_error("support and coefficients differ in count");
    mem.model = std::move(model);
    m.ensemble.members.push_back(std::move(mem));
  }
  return m;
}

/// Keeps only the pipeline pairs that some member reads.
inline TrainedModel make_trained_model(const FeaturePipeline& fp, Ensemble ens, const std::string& features) {
  TrainedModel m;
  m.features = features;
  m.pipeline.config = fp.config;
  std::set<AntennaPairId> used;
  for (const auto& e : ens.members) used.insert(e.spec.pair);
  for (const auto& pp : fp.pairs)
    if (used.count(pp.pair)) m.pipeline.pairs.push_back(pp);
  m.ensemble = std::move(ens);
  return m;
}

inline void save_model(const TrainedModel& m, const std::filesystem::path& path) { write_json(path, model_json(m)); }

inline TrainedModel load_model(const std::filesystem::path& path) {
  const auto j = read_json(path);
  try {
    return model_from(j);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": malformed model: " + e.what());
  }
}

}  // namespace emdscan
