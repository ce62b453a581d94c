// emd: command-line front end for the scan-generation, feature-extraction, training and
// evaluation pipeline. Exit codes: 0 success, 1 runtime failure, 2 usage or config error,
// 3 missing input artifact.

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>
#include <tbb/global_control.h>
#include <tbb/info.h>

#include <CLI11.hpp>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "emdscan/config.hpp"
#include "emdscan/data_io.hpp"
#include "emdscan/experiment.hpp"
#include "emdscan/model_io.hpp"
#include "emdscan/scan_io.hpp"

namespace fs = std::filesystem;
using namespace emdscan;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  int workers = 0;
  bool desk_scale = false;
};

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

ExperimentConfig load(const Globals& g) {
  ExperimentConfig cfg;
  if (g.config.empty()) {
    std::istringstream none;
    cfg = load_config(none, g.desk_scale);
  } else {
    if (!fs::exists(g.config)) throw MissingArtifact(g.config, "config file");
    std::ifstream in(g.config);
    cfg = load_config(in, g.desk_scale);
  }
  apply_seed_overrides(cfg, g.seed);
  return cfg;
}

/// Writes the resolved config next to an output (file or directory).
void log_config(const ExperimentConfig& cfg, const fs::path& out, bool is_dir) {
  const auto text = resolved_config_text(cfg);
  const fs::path where = is_dir ? out / "resolved.cfg" : fs::path(out.string() + ".cfg");
  atomic_write_text(where, text);
  spdlog::info("seed {}, {} scale; resolved config in {}", cfg.seed, cfg.desk_scale ? "desk" : "full", where.string());
  spdlog::debug("resolved config:\n{}", text);
}

Vec3 parse_vec3(const std::string& s, const char* what) {
  const auto v = config_detail::to_doubles(s);
  if (v.size() != 3) throw std::invalid_argument(std::string(what) + " needs 3 comma-separated values");
  return {v[0], v[1], v[2]};
}

std::string scan_cols(const Scan& s) {
  return std::to_string(s.volunteer) + "," + std::to_string(s.visit) + "," + side_code(s.side) + "," +
         label_code(s.label);
}

// ---- gen ----

void cmd_gen(const ExperimentConfig& cfg, const fs::path& out) {
  const auto cohort = build_cohort(cfg.cohort());
  spdlog::info("cohort: {} volunteers, {} scans, {} pairs", cohort.profiles.size(), cohort.scans.size(),
               cohort.pairs.size());
  std::vector<ProtocolCheck> checks(static_cast<std::size_t>(cfg.datasets));
  parallel_for(checks.size(), [&](std::size_t k) {
    const int index = static_cast<int>(k) + 1;
    const auto d = build_dataset(cohort, index, cfg.seed, cfg.dataset);
    const auto splits = make_splits(d, cfg.dataset.region);
    checks[k] = check_protocol(d, splits);
    write_dataset(d, splits, out / ("ds" + std::to_string(index)));
  });
  for (std::size_t k = 0; k < checks.size(); ++k) {
    const auto& c = checks[k];
    spdlog::info("ds{}: {} splits, {} tumour scans, train healthy:tumour in [{:.2f}, {:.2f}], test balanced {}", k + 1,
                 c.splits, c.tumour_scans, c.min_train_ratio, c.max_train_ratio, c.test_balanced);
    if (!c.ok()) throw std::runtime_error("ds" + std::to_string(k + 1) + " violates the split protocol");
  }
  log_config(cfg, out, true);
}

// ---- inject ----

void cmd_inject(const ExperimentConfig& cfg, const fs::path& in, const fs::path& out, const std::string& tumour,
                std::optional<double> gamma, const std::string& debye) {
  const Vec3 pos = parse_vec3(tumour, "--tumour");
  DebyeParams p;
  if (debye.empty()) {
    const auto& r = cfg.dataset.debye;
    p = {0.5 * (r.eps_inf.lo + r.eps_inf.hi), 0.5 * (r.delta_eps.lo + r.delta_eps.hi), 0.5 * (r.tau.lo + r.tau.hi),
         0.5 * (r.sigma_s.lo + r.sigma_s.hi)};
  } else {
    const auto v = config_detail::to_doubles(debye);
    if (v.size() != 4) throw std::invalid_argument("--debye needs eps_inf,delta_eps,tau,sigma_s");
    p = {v[0], v[1], v[2], v[3]};
  }
  p.validate();
  const auto g = cfg.make_geometry();
  if (!g.inside(pos)) throw std::invalid_argument("--tumour position lies outside the breast");
  auto scans = read_scans(in);
  std::vector<Scan> outs(scans.size());
  const double gm = gamma.value_or(cfg.dataset.gamma);
  for (std::size_t i = 0; i < scans.size(); ++i)
    if (scans[i].label == Label::Tumour)
      throw std::invalid_argument("scan on line " + std::to_string(i + 1) + " already carries a tumour");
  parallel_for(scans.size(), [&](std::size_t i) { outs[i] = inject_scan(scans[i], g, pos, gm, p); });
  write_scans(outs, out);
  spdlog::info("injected {} scans (gamma {})", outs.size(), gm);
  log_config(cfg, out, false);
}

// ---- decompose ----

void cmd_decompose(const ExperimentConfig& cfg, const fs::path& in, const std::string& pair_text, std::size_t index,
                   bool full, const fs::path& out) {
  const auto scans = read_scans(in);
  if (index >= scans.size())
    throw std::invalid_argument("--scan " + std::to_string(index) + " but the file holds " +
                                std::to_string(scans.size()) + " scans");
  const auto pair = AntennaPairId::parse(pair_text);
  const auto& ts = scans[index].signal(pair);
  const WindowSpec w = full ? WindowSpec::full(ts.size()) : cfg.pipeline.window;
  const auto x = window_view(ts.view(), w);
  const auto set = sift(x, cfg.pipeline.sift);
  for (std::size_t k = 0; k < set.imfs.size(); ++k)
    if (set.not_converged[k])
      spdlog::warn("IMF {} did not converge within {} sifting iterations", k + 1, cfg.pipeline.sift.max_sift_iters);
  atomic_write(out, [&](std::ostream& o) {
    o << "sample";
    for (std::size_t k = 0; k < set.imfs.size(); ++k) o << ",imf" << k + 1;
    o << ",residue\n";
    for (std::size_t i = 0; i < x.size(); ++i) {
      o << w.start + i;
      for (const auto& d : set.imfs) o << ',' << num(d[i]);
      o << ',' << num(set.residue[i]) << '\n';
    }
  });
  spdlog::info("pair {}: {} IMFs over samples [{}, {}]", pair.str(), set.imfs.size(), w.start, w.end);
  log_config(cfg, out, false);
}

// ---- features ----

void cmd_features(const ExperimentConfig& cfg, const fs::path& in, const fs::path& out, bool normalize) {
  const auto scans = read_scans(in);
  if (scans.empty()) throw std::invalid_argument(in.string() + " holds no scans");
  const auto emd = scans_emd_features(scans, cfg.pipeline);
  std::map<AntennaPairId, Normalizer> norm;
  if (normalize)
    for (const auto& [pair, _] : emd.front()) {
      std::vector<std::vector<double>> rows;
      for (const auto& e : emd) rows.emplace_back(e.at(pair).begin(), e.at(pair).end());
      norm[pair] = Normalizer::fit<std::vector<double>>(rows);
    }
  atomic_write(out, [&](std::ostream& o) {
    o << "pair,volunteer,visit,side,label";
    for (std::size_t f = 1; f <= kEmdFeatures; ++f) o << ",f" << f;
    o << '\n';
    for (std::size_t i = 0; i < scans.size(); ++i)
      for (const auto& [pair, feats] : emd[i]) {
        std::vector<double> v(feats.begin(), feats.end());
        if (normalize) v = norm.at(pair).apply(v);
        o << pair.str() << ',' << scan_cols(scans[i]);
        for (double f : v) o << ',' << num(f);
        o << '\n';
      }
  });
  spdlog::info("{} scans, {} pairs, {} features", scans.size(), emd.front().size(), normalize ? "normalised" : "raw");
  log_config(cfg, out, false);
}

// ---- pca ----

void cmd_pca(const ExperimentConfig& cfg, const fs::path& fit, const std::string& pair_text, const fs::path& model,
             const std::string& scores, const std::string& score_in) {
  const auto train = read_scans(fit);
  if (train.size() < 2) throw std::invalid_argument("PCA needs at least 2 training scans");
  const auto pair = AntennaPairId::parse(pair_text);
  const auto m = pca_fit(windowed_matrix(train, pair, cfg.pipeline.window));
  atomic_write(model, [&](std::ostream& o) { save_pca(m, o); });
  spdlog::info("pair {}: {} components from {} scans", pair.str(), m.retained(), train.size());
  if (!scores.empty()) {
    const auto scans = score_in.empty() ? train : read_scans(score_in);
    atomic_write(scores, [&](std::ostream& o) {
      o << "pair,volunteer,visit,side,label";
      for (std::size_t f = 1; f <= kPcaScores; ++f) o << ",f" << f;
      o << '\n';
      for (const auto& s : scans) {
        const auto sc = pca_scores(m, window_view(s.signal(pair).view(), cfg.pipeline.window));
        o << pair.str() << ',' << scan_cols(s);
        for (double v : sc) o << ',' << num(v);
        o << '\n';
      }
    });
  }
  log_config(cfg, model, false);
}

// ---- train ----

struct SplitRef {
  fs::path dataset_dir;
  std::size_t index = 0;
};

SplitRef parse_split_ref(const std::string& s) {
  const auto hash = s.rfind('#');
  if (hash == std::string::npos) throw std::invalid_argument("--split expects <path>/splits.json#<index>");
  SplitRef r;
  r.dataset_dir = fs::path(s.substr(0, hash)).parent_path();
  if (r.dataset_dir.empty()) r.dataset_dir = ".";
  r.index = static_cast<std::size_t>(config_detail::to_int_in(s.substr(hash + 1), 0, 1 << 30));
  return r;
}

Library build_mode_library(const SplitFeatures& sf, const ExperimentConfig& cfg, const std::string& features) {
  auto opt = cfg.experiment_options();
  LibraryOptions lopt = opt.library;
  if (opt.group_folds_by_volunteer) lopt.groups = sf.train_volunteer;
  if (features != "scalar") return build_library(sf.train, sf.y_train, opt.grid, FeatureMode::parse(features), lopt);
  Library all;
  for (int f = 1; f <= static_cast<int>(kEmdFeatures); ++f) {
    auto lib = build_library(sf.train, sf.y_train, opt.grid, FeatureMode::scalar(f), lopt);
    all.entries.insert(all.entries.end(), std::make_move_iterator(lib.entries.begin()),
                       std::make_move_iterator(lib.entries.end()));
  }
  return all;
}

void cmd_train(const ExperimentConfig& cfg, const std::string& split_text, double alpha, const std::string& features,
               const fs::path& out, const std::string& test_out) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("--alpha must lie in (0, 1]");
  if (features != "scalar") (void)FeatureMode::parse(features);
  const auto ref = parse_split_ref(split_text);
  const auto stored = read_dataset(ref.dataset_dir);
  if (ref.index >= stored.splits.size())
    throw std::invalid_argument("split index " + std::to_string(ref.index) + " out of range (dataset has " +
                                std::to_string(stored.splits.size()) + ")");
  const auto ss = split_scans(stored.dataset, stored.splits[ref.index]);
  const auto train_emd = scans_emd_features(ss.train, cfg.pipeline);
  const auto test_emd = scans_emd_features(ss.test, cfg.pipeline);
  const auto sf = split_features(ss.train, train_emd, ss.test, test_emd, cfg.pipeline);
  spdlog::info("split {}: {} training scans, {} test scans, {} pairs retained", ref.index, ss.train.size(),
               ss.test.size(), sf.pipeline.pairs.size());
  const auto lib = build_mode_library(sf, cfg, features);
  auto ens = select(lib, alpha, cfg.k, cfg.rule);
  spdlog::info("library of {} models; selected {} for alpha {}", lib.entries.size(), ens.members.size(), alpha);
  save_model(make_trained_model(sf.pipeline, std::move(ens), features), out);
  if (!test_out.empty()) write_scans(ss.test, fs::path(test_out));
  log_config(cfg, out, false);
}

// ---- classify ----

void cmd_classify(const ExperimentConfig& cfg, const fs::path& model_path, const fs::path& in, const fs::path& out) {
  const auto model = load_model(model_path);
  const auto scans = read_scans(in);
  std::vector<Vote> votes(scans.size());
  parallel_for(scans.size(),
               [&](std::size_t i) { votes[i] = classify(model.ensemble, model.pipeline.features(scans[i])); });
  atomic_write(out, [&](std::ostream& o) {
    o << "volunteer,visit,side,label,predicted,score\n";
    for (std::size_t i = 0; i < scans.size(); ++i)
      o << scan_cols(scans[i]) << ',' << label_code(votes[i].label) << ',' << num(votes[i].score) << '\n';
  });
  std::vector<int> truth, pred;
  for (std::size_t i = 0; i < scans.size(); ++i) {
    truth.push_back(label_sign(scans[i].label));
    pred.push_back(label_sign(votes[i].label));
  }
  try {
    const auto m = evaluate_predictions(truth, pred, model.ensemble.alpha);
    spdlog::info("{} scans: pf {:.3f}, pm {:.3f}, error {:.3f}", scans.size(), m.pf, m.pm, m.avg_error);
  } catch (const EvaluationError&) {
    spdlog::info("{} scans classified", scans.size());
  }
  log_config(cfg, out, false);
}

// ---- eval ----

void write_report(const EvalReport& r, const ExperimentConfig& cfg, const fs::path& out) {
  atomic_write(out / "summary.csv", [&](std::ostream& o) { write_summary(r, o); });
  atomic_write(out / "auc.csv", [&](std::ostream& o) { write_auc(r, o); });
  std::set<std::string> modes;
  for (const auto& c : r.rocs) modes.insert(c.mode);
  for (const auto& m : modes) atomic_write(out / ("roc_" + m + ".csv"), [&](std::ostream& o) { write_roc(r, m, o); });
  atomic_write(out / "per_volunteer.csv", [&](std::ostream& o) { write_per_volunteer(r, o); });
  atomic_write(out / "feature_selection_histogram.csv",
               [&](std::ostream& o) { write_histogram(r, cfg.report_alphas, o); });
}

void cmd_eval(const ExperimentConfig& cfg, const fs::path& data, const fs::path& out) {
  const auto dirs = dataset_dirs(data);
  const std::size_t use = std::min<std::size_t>(dirs.size(), static_cast<std::size_t>(cfg.datasets));
  if (dirs.size() < static_cast<std::size_t>(cfg.datasets))
    spdlog::warn("{} datasets requested but only {} found under {}", cfg.datasets, dirs.size(), data.string());
  for (std::size_t k = 0; k < use; ++k)
    for (const char* f : {"meta.json", "scans.ndjson", "carriers.ndjson", "splits.json"})
      if (!fs::exists(dirs[k] / f)) throw MissingArtifact((dirs[k] / f).string(), "run `emd gen` first");

  const auto base = cfg.experiment_options();
  EmdCache cache(cfg.pipeline);
  std::vector<ExperimentRunner> runners;
  for (std::size_t g = 0; g < cfg.gammas.size(); ++g) {
    auto opt = base;
    if (g > 0) {
      opt.scalar = false;
      opt.modes.clear();
      for (const auto& m : cfg.gamma_modes) opt.modes.push_back(FeatureMode::parse(m));
    }
    runners.emplace_back(opt, cache, cfg.gammas[g]);
  }
  for (std::size_t k = 0; k < use; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto stored = read_dataset(dirs[k]);
    const auto ids = spread_indices(stored.splits.size(), static_cast<std::size_t>(cfg.splits_per_dataset));
    for (std::size_t g = 0; g < cfg.gammas.size(); ++g) {
      const auto d = stored.dataset.gamma == cfg.gammas[g] ? stored.dataset : with_gamma(stored.dataset, cfg.gammas[g]);
      const bool scalar = g == 0 && base.scalar && (base.scalar_datasets == 0 || k < base.scalar_datasets);
      runners[g].add(d, stored.splits, ids, scalar);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    spdlog::info("{}: {} splits x {} response levels in {:.1f} s", dirs[k].filename().string(), ids.size(),
                 cfg.gammas.size(), secs);
  }
  EvalReport report;
  for (const auto& r : runners) r.finish(report);
  write_report(report, cfg, out);
  for (const auto& c : report.rocs) spdlog::info("gamma {} {}: AUC {:.3f}", c.gamma, c.mode, c.auc);
  log_config(cfg, out, true);
}

int run(int argc, char** argv) {
  CLI::App app{"EMD and PCA features with a Neyman-Pearson 2nu-SVM ensemble for multistatic radar scans"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "key = value config file with [sections]");
  app.add_option("--seed", g.seed, "master seed (overrides the config and EMD_SEED)");
  app.add_option("--workers", g.workers, "worker threads (default: all cores)")->check(CLI::NonNegativeNumber);
  app.add_flag("--desk-scale", g.desk_scale, "reduced experiment preset");
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  std::string in, out, pair, tumour, debye, split, features, model, scores, score_in, test_out, fit;
  std::string data = "data";
  std::optional<double> gamma;
  std::optional<int> datasets;
  std::optional<int> alphas;
  std::vector<double> gammas;
  std::vector<std::string> feature_list;
  double alpha = 0.3;
  std::size_t scan_index = 0;
  bool full = false, normalize = false;

  auto* gen = app.add_subcommand("gen", "generate datasets and splits");
  gen->add_option("--datasets", datasets, "number of datasets")->check(CLI::PositiveNumber);
  gen->add_option("--out", out, "output directory")->required();

  auto* inj = app.add_subcommand("inject", "add a tumour response to every scan of a file");
  inj->add_option("--in", in)->required();
  inj->add_option("--tumour", tumour, "x,y,z in metres")->required();
  inj->add_option("--gamma", gamma, "response attenuation");
  inj->add_option("--debye", debye, "eps_inf,delta_eps,tau,sigma_s (default: middle of configured ranges)");
  inj->add_option("--out", out)->required();

  auto* dec = app.add_subcommand("decompose", "IMFs and residue of one recording as CSV");
  dec->add_option("--in", in)->required();
  dec->add_option("--pair", pair, "tx-rx")->required();
  dec->add_option("--scan", scan_index, "0-based scan index in the file");
  dec->add_flag("--full", full, "decompose the whole recording instead of the analysis window");
  dec->add_option("--out", out)->required();

  auto* fea = app.add_subcommand("features", "20 EMD features per scan and pair as CSV");
  fea->add_option("--in", in)->required();
  fea->add_flag("--normalize", normalize, "min-max scale per pair over the input file");
  fea->add_option("--out", out)->required();

  auto* pca = app.add_subcommand("pca", "fit a per-pair PCA model");
  pca->add_option("--fit", fit, "training scans")->required();
  pca->add_option("--pair", pair, "tx-rx")->required();
  pca->add_option("--model", model)->required();
  pca->add_option("--scores", scores, "also write normalised scores as CSV");
  pca->add_option("--in", score_in, "scans to score (default: the training scans)");

  auto* trn = app.add_subcommand("train", "train and select an ensemble on one split");
  trn->add_option("--split", split, "data/ds<k>/splits.json#<index>")->required();
  trn->add_option("--alpha", alpha, "false-positive target");
  trn->add_option("--features", features, "emd, pca, combined, scalar or scalar<k>")->default_val("combined");
  trn->add_option("--out", out)->required();
  trn->add_option("--test-out", test_out, "also write the split's test scans");

  auto* cls = app.add_subcommand("classify", "label scans with a trained ensemble");
  cls->add_option("--model", model)->required();
  cls->add_option("--in", in)->required();
  cls->add_option("--out", out)->required();

  auto* evl = app.add_subcommand("eval", "run the split protocol and write the report");
  evl->add_option("--data", data, "directory written by gen");
  evl->add_option("--features", feature_list, "emd, pca, combined, scalar")->delimiter(',');
  evl->add_option("--alphas", alphas, "number of alpha values in [0, 1]");
  evl->add_option("--gamma-resp", gammas, "response attenuations")->delimiter(',');
  evl->add_option("--out", out)->required();

  auto* rep = app.add_subcommand("reproduce", "gen followed by eval");
  rep->add_option("--out", out, "directory for data/ and report/")->default_val(".");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  ExperimentConfig cfg;
  try {
    cfg = load(g);
    if (datasets) cfg.datasets = *datasets;
    if (alphas) {
      if (*alphas < 2) throw ConfigError("--alphas: needs at least 2 values");
      cfg.alpha_count = *alphas;
    }
    if (!feature_list.empty()) cfg.features = config_detail::mode_list(config_detail::join(feature_list), true);
    if (!gammas.empty()) {
      for (double v : gammas)
        if (!(v >= 0.0)) throw ConfigError("--gamma-resp: values must be >= 0");
      cfg.gammas = gammas;
    }
  } catch (const ConfigError& e) {
    spdlog::error("invalid configuration: {}", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    spdlog::error("invalid configuration: {}", e.what());
    return 2;
  }

  const int workers = g.workers > 0 ? g.workers : tbb::info::default_concurrency();
  tbb::global_control limit(tbb::global_control::max_allowed_parallelism, static_cast<std::size_t>(workers));
  spdlog::debug("{} worker threads", workers);

  const auto t0 = std::chrono::steady_clock::now();
  if (gen->parsed())
    cmd_gen(cfg, out);
  else if (inj->parsed())
    cmd_inject(cfg, in, out, tumour, gamma, debye);
  else if (dec->parsed())
    cmd_decompose(cfg, in, pair, scan_index, full, out);
  else if (fea->parsed())
    cmd_features(cfg, in, out, normalize);
  else if (pca->parsed())
    cmd_pca(cfg, fit, pair, model, scores, score_in);
  else if (trn->parsed())
    cmd_train(cfg, split, alpha, features, out, test_out);
  else if (cls->parsed())
    cmd_classify(cfg, model, in, out);
  else if (evl->parsed())
    cmd_eval(cfg, data, out);
  else if (rep->parsed()) {
    const fs::path root = out;
    cmd_gen(cfg, root / "data");
    cmd_eval(cfg, root / "data", root / "report");
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  spdlog::info("done in {:.1f} s", secs);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_logger_mt("emd");
  logger->set_pattern("[%H:%M:%S] [%l] %v");
  spdlog::set_default_logger(logger);
  try {
    return run(argc, argv);
  } catch (const MissingArtifact& e) {
    spdlog::error("{}", e.what());
    return 3;
  } catch (const ConfigError& e) {
    spdlog::error("invalid configuration: {}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}
