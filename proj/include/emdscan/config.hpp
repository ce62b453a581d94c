#pragma once

// Experiment configuration: INI-style `key = value` lines under `[section]` headers.
// Every field has a default; the resolved configuration (all fields) can be written
// back out in the same syntax. Precedence, lowest first: defaults, desk-scale preset,
// config file, EMD_SEED, --seed.

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "emdscan/dataset.hpp"
#include "emdscan/error.hpp"
#include "emdscan/experiment.hpp"

namespace emdscan {

struct GeometrySpec {
  double breast_radius = 0.07;
  double standoff = 0.01;
  double ring1_z = -0.01;
  double ring2_z = -0.04;
  double eps_im = 3.0;
};

struct ExperimentConfig {
  std::uint64_t seed = 7;
  bool desk_scale = false;
  int datasets = 50;
  int splits_per_dataset = 0;  // 0: all

  std::vector<int> visits = default_visit_table();
  SynthConfig synth;
  GeometrySpec geometry;
  DatasetConfig dataset;
  PipelineConfig pipeline;

  NuGrid grid = NuGrid::full();
  SolverOptions solver{1e-4, 100000};
  std::size_t k = 100;
  VoteRule rule = VoteRule::Hard;
  int cv_folds = 5;
  bool group_by_volunteer = false;

  int alpha_count = 101;
  std::vector<double> report_alphas{0.1, 0.3, 0.5};
  std::vector<std::string> features{"emd", "pca", "combined", "scalar"};
  std::vector<double> gammas{1.0, 0.75, 0.5};
  std::vector<std::string> gamma_modes{"combined"};
  int scalar_datasets = 0;  // 0: all

  Geometry make_geometry() const {
    return emdscan::make_geometry(geometry.breast_radius, geometry.standoff, geometry.ring1_z, geometry.ring2_z,
                                  geometry.eps_im);
  }

  CohortConfig cohort() const {
    CohortConfig c;
    c.visits = visits;
    c.synth = synth;
    c.geometry = make_geometry();
    c.seed = seed;
    return c;
  }

  /// Options for the primary response attenuation; `modes` excludes the scalar study.
  ExperimentOptions experiment_options() const {
    ExperimentOptions o;
    o.pipeline = pipeline;
    o.grid = grid;
    o.library.cv_folds = cv_folds;
    o.library.solver = solver;
    o.group_folds_by_volunteer = group_by_volunteer;
    o.k = k;
    o.rule = rule;
    o.alphas = alpha_grid(alpha_count);
    o.report_alphas = report_alphas;
    o.modes.clear();
    for (const auto& f : features) {
      if (f == "scalar")
        o.scalar = true;
      else
        o.modes.push_back(FeatureMode::parse(f));
    }
    o.scalar_datasets = static_cast<std::size_t>(scalar_datasets);
    return o;
  }
};

/// Reduced experiment that finishes in minutes on a laptop.
inline void apply_desk_scale(ExperimentConfig& c) {
  c.desk_scale = true;
  c.datasets = 5;
  c.splits_per_dataset = 10;
  c.synth.generated_pairs = 20;
  c.pipeline.max_pairs = 20;
  const std::vector<double> nu{0.001, 0.03, 0.1, 0.3, 0.6, 1.0};
  c.grid.nu_plus = nu;
  c.grid.nu_minus = nu;
  c.scalar_datasets = 1;
}

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

inline double to_double(const std::string& s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end || !std::isfinite(v))
    throw std::invalid_argument("'" + s + "' is not a number");
  return v;
}

inline long long to_int(const std::string& s) {
  long long v = 0;
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) throw std::invalid_argument("'" + s + "' is not an integer");
  return v;
}

inline std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) throw std::invalid_argument("'" + s + "' is not a non-negative integer");
  return v;
}

inline bool to_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw std::invalid_argument("'" + s + "' is not a boolean (true/false)");
}

inline std::vector<double> to_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& t : split_list(s)) out.push_back(to_double(t));
  return out;
}

inline std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
  return out;
}

inline std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

inline Range to_range(const std::string& s) {
  const auto v = to_doubles(s);
  if (v.size() != 2 || v[0] > v[1]) throw std::invalid_argument("expected 'lo,hi' with lo <= hi");
  return {v[0], v[1]};
}

inline std::string join(const Range& r) { return fmt(r.lo) + "," + fmt(r.hi); }

inline int to_int_in(const std::string& s, long long lo, long long hi) {
  const auto v = to_int(s);
  if (v < lo || v > hi)
    throw std::invalid_argument("must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return static_cast<int>(v);
}

inline double positive(const std::string& s) {
  const double v = to_double(s);
  if (!(v > 0.0)) throw std::invalid_argument("must be positive");
  return v;
}

inline double non_negative(const std::string& s) {
  const double v = to_double(s);
  if (!(v >= 0.0)) throw std::invalid_argument("must be >= 0");
  return v;
}

inline std::vector<double> nu_list(const std::string& s) {
  auto v = to_doubles(s);
  if (v.empty()) throw std::invalid_argument("needs at least one value");
  for (double x : v)
    if (!(x > 0.0 && x <= 1.0)) throw std::invalid_argument("values must lie in (0, 1]");
  return v;
}

inline std::vector<std::string> mode_list(const std::string& s, bool allow_scalar) {
  auto v = split_list(s);
  if (v.empty()) throw std::invalid_argument("needs at least one feature mode");
  for (const auto& m : v) {
    if (m == "scalar" && allow_scalar) continue;
    if (m != "emd" && m != "pca" && m != "combined")
      throw std::invalid_argument("unknown feature mode '" + m + "' (emd, pca, combined" +
                                  std::string(allow_scalar ? ", scalar)" : ")"));
  }
  return v;
}

}  // namespace config_detail

struct ConfigField {
  std::string section;
  std::string key;
  std::function<void(const std::string&)> set;  // throws std::invalid_argument with a reason
  std::function<std::string()> get;
};

/// The table that drives parsing, validation and the resolved-config dump.
inline std::vector<ConfigField> config_fields(ExperimentConfig& c) {
  using namespace config_detail;
  std::vector<ConfigField> f;
  auto add = [&](std::string sec, std::string key, std::function<void(const std::string&)> set,
                 std::function<std::string()> get) {
    f.push_back({std::move(sec), std::move(key), std::move(set), std::move(get)});
  };
  auto dbl = [&](std::string sec, std::string key, double& ref, double (*parse)(const std::string&)) {
    add(
        std::move(sec), std::move(key), [&ref, parse](const std::string& s) { ref = parse(s); },
        [&ref] { return fmt(ref); });
  };
  auto range = [&](std::string sec, std::string key, Range& ref) {
    add(
        std::move(sec), std::move(key), [&ref](const std::string& s) { ref = to_range(s); },
        [&ref] { return join(ref); });
  };
  auto integer = [&](std::string sec, std::string key, int& ref, long long lo, long long hi) {
    add(
        std::move(sec), std::move(key), [&ref, lo, hi](const std::string& s) { ref = to_int_in(s, lo, hi); },
        [&ref] { return std::to_string(ref); });
  };

  add("run", "seed", [&c](const std::string& s) { c.seed = to_u64(s); }, [&c] { return std::to_string(c.seed); });
  add(
      "run", "desk_scale", [&c](const std::string& s) { c.desk_scale = to_bool(s); },
      [&c] { return std::string(c.desk_scale ? "true" : "false"); });
  integer("run", "datasets", c.datasets, 1, 100000);
  integer("run", "splits_per_dataset", c.splits_per_dataset, 0, 100000);

  add(
      "cohort", "visits",
      [&c](const std::string& s) {
        std::vector<int> v;
        for (const auto& t : split_list(s)) v.push_back(to_int_in(t, 1, 1000));
        if (v.size() < 3) throw std::invalid_argument("needs at least 3 volunteers");
        c.visits = v;
      },
      [&c] {
        std::string out;
        for (std::size_t i = 0; i < c.visits.size(); ++i) out += (i ? "," : "") + std::to_string(c.visits[i]);
        return out;
      });
  add(
      "cohort", "record_length",
      [&c](const std::string& s) { c.synth.record_length = static_cast<std::size_t>(to_int_in(s, 8, 1 << 20)); },
      [&c] { return std::to_string(c.synth.record_length); });
  dbl("cohort", "dt", c.synth.dt, positive);
  dbl("cohort", "system_delay", c.synth.system_delay, non_negative);
  dbl("cohort", "pulse_width", c.synth.pulse_width, positive);
  dbl("cohort", "amplitude", c.synth.amplitude, positive);
  dbl("cohort", "decay_length", c.synth.decay_length, positive);
  dbl("cohort", "volunteer_spread", c.synth.volunteer_spread, non_negative);
  dbl("cohort", "volunteer_delay", c.synth.volunteer_delay, non_negative);
  integer("cohort", "multipath_count", c.synth.multipath_count, 0, 64);
  range("cohort", "multipath_delay", c.synth.multipath_delay);
  range("cohort", "multipath_amplitude", c.synth.multipath_amplitude);
  range("cohort", "multipath_width", c.synth.multipath_width);
  dbl("cohort", "visit_amplitude", c.synth.visit_amplitude, non_negative);
  integer("cohort", "jitter", c.synth.jitter, 0, 1000);
  dbl("cohort", "snr_db", c.synth.snr_db, to_double);
  integer("cohort", "generated_pairs", c.synth.generated_pairs, 0, kNumPairs);

  dbl("geometry", "breast_radius", c.geometry.breast_radius, positive);
  dbl("geometry", "standoff", c.geometry.standoff, non_negative);
  add(
      "geometry", "ring_z",
      [&c](const std::string& s) {
        const auto v = to_doubles(s);
        if (v.size() != 2) throw std::invalid_argument("expected two ring heights");
        c.geometry.ring1_z = v[0];
        c.geometry.ring2_z = v[1];
      },
      [&c] { return fmt(c.geometry.ring1_z) + "," + fmt(c.geometry.ring2_z); });
  dbl("geometry", "eps_im", c.geometry.eps_im, positive);

  range("debye", "eps_inf", c.dataset.debye.eps_inf);
  range("debye", "delta_eps", c.dataset.debye.delta_eps);
  range("debye", "tau", c.dataset.debye.tau);
  range("debye", "sigma_s", c.dataset.debye.sigma_s);

  dbl("tumour", "gamma", c.dataset.gamma, non_negative);
  add(
      "tumour", "azimuth",
      [&c](const std::string& s) {
        const auto r = to_range(s);
        c.dataset.region.az_min_deg = r.lo;
        c.dataset.region.az_max_deg = r.hi;
      },
      [&c] { return fmt(c.dataset.region.az_min_deg) + "," + fmt(c.dataset.region.az_max_deg); });
  dbl("tumour", "margin", c.dataset.region.margin, non_negative);

  integer("sift", "n_imf_max", c.pipeline.sift.n_imf_max, 1, 64);
  integer("sift", "max_sift_iters", c.pipeline.sift.max_sift_iters, 1, 100000);
  dbl("sift", "c2_tol", c.pipeline.sift.c2_tol, positive);
  add(
      "sift", "boundary",
      [&c](const std::string& s) {
        if (s == "mirror")
          c.pipeline.sift.boundary = BoundaryPolicy::Mirror;
        else if (s == "none")
          c.pipeline.sift.boundary = BoundaryPolicy::None;
        else
          throw std::invalid_argument("expected mirror or none");
      },
      [&c] { return std::string(c.pipeline.sift.boundary == BoundaryPolicy::Mirror ? "mirror" : "none"); });
  add(
      "sift", "interpolation",
      [&c](const std::string& s) {
        if (s == "cubic")
          c.pipeline.sift.interpolation = Interpolation::NaturalCubic;
        else if (s == "linear")
          c.pipeline.sift.interpolation = Interpolation::Linear;
        else
          throw std::invalid_argument("expected cubic or linear");
      },
      [&c] { return std::string(c.pipeline.sift.interpolation == Interpolation::NaturalCubic ? "cubic" : "linear"); });

  add(
      "pipeline", "window",
      [&c](const std::string& s) {
        const auto v = split_list(s);
        if (v.size() != 2) throw std::invalid_argument("expected 'start,end'");
        const auto a = to_int_in(v[0], 1, 1 << 20), b = to_int_in(v[1], 1, 1 << 20);
        if (a > b) throw std::invalid_argument("start must not exceed end");
        c.pipeline.window = {static_cast<std::size_t>(a), static_cast<std::size_t>(b)};
      },
      [&c] { return std::to_string(c.pipeline.window.start) + "," + std::to_string(c.pipeline.window.end); });
  dbl("pipeline", "pair_threshold", c.pipeline.pair_threshold, non_negative);
  integer("pipeline", "max_pairs", c.pipeline.max_pairs, 0, kNumPairs);

  dbl("svm", "rbf_gamma", c.grid.gamma, positive);
  add(
      "svm", "nu_plus", [&c](const std::string& s) { c.grid.nu_plus = nu_list(s); },
      [&c] { return join(c.grid.nu_plus); });
  add(
      "svm", "nu_minus", [&c](const std::string& s) { c.grid.nu_minus = nu_list(s); },
      [&c] { return join(c.grid.nu_minus); });
  dbl("svm", "tolerance", c.solver.tolerance, positive);
  integer("svm", "max_iterations", c.solver.max_iterations, 1, 1000000000);

  add(
      "ensemble", "k", [&c](const std::string& s) { c.k = static_cast<std::size_t>(to_int_in(s, 1, 1000000)); },
      [&c] { return std::to_string(c.k); });
  add(
      "ensemble", "vote",
      [&c](const std::string& s) {
        if (s == "hard")
          c.rule = VoteRule::Hard;
        else if (s == "score")
          c.rule = VoteRule::Score;
        else
          throw std::invalid_argument("expected hard or score");
      },
      [&c] { return std::string(c.rule == VoteRule::Hard ? "hard" : "score"); });
  add(
      "ensemble", "cv_folds",
      [&c](const std::string& s) {
        const int v = to_int_in(s, 0, 1000);
        if (v == 1) throw std::invalid_argument("use 0 (training data) or at least 2 folds");
        c.cv_folds = v;
      },
      [&c] { return std::to_string(c.cv_folds); });
  add(
      "ensemble", "group_by_volunteer", [&c](const std::string& s) { c.group_by_volunteer = to_bool(s); },
      [&c] { return std::string(c.group_by_volunteer ? "true" : "false"); });

  integer("eval", "alphas", c.alpha_count, 2, 100000);
  add(
      "eval", "report_alphas",
      [&c](const std::string& s) {
        auto v = to_doubles(s);
        for (double a : v)
          if (!(a > 0.0 && a <= 1.0)) throw std::invalid_argument("values must lie in (0, 1]");
        c.report_alphas = v;
      },
      [&c] { return join(c.report_alphas); });
  add(
      "eval", "features", [&c](const std::string& s) { c.features = mode_list(s, true); },
      [&c] { return join(c.features); });
  add(
      "eval", "gamma_resp",
      [&c](const std::string& s) {
        auto v = to_doubles(s);
        if (v.empty()) throw std::invalid_argument("needs at least one value");
        for (double g : v)
          if (!(g >= 0.0)) throw std::invalid_argument("values must be >= 0");
        c.gammas = v;
      },
      [&c] { return join(c.gammas); });
  add(
      "eval", "gamma_modes", [&c](const std::string& s) { c.gamma_modes = mode_list(s, false); },
      [&c] { return join(c.gamma_modes); });
  integer("eval", "scalar_datasets", c.scalar_datasets, 0, 100000);
  return f;
}

struct ConfigEntry {
  std::string section;
  std::string key;
  std::string value;
  std::size_t line = 0;
};

inline std::vector<ConfigEntry> parse_config_text(std::istream& in) {
  std::vector<ConfigEntry> out;
  std::string text, section;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    auto s = config_detail::trim(text);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("line " + std::to_string(line) + ": unterminated section header");
      section = config_detail::trim(s.substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line) + ": expected 'key = value'");
    auto value = s.substr(eq + 1);
    if (const auto hash = value.find(" #"); hash != std::string::npos) value.resize(hash);
    out.push_back({section, config_detail::trim(s.substr(0, eq)), config_detail::trim(value), line});
  }
  return out;
}

/// Cross-field checks; messages name the offending field.
inline void validate_config(const ExperimentConfig& c) {
  auto fail = [](const std::string& field, const std::string& why) { throw ConfigError(field + ": " + why); };
  if (c.pipeline.window.end > c.synth.record_length)
    fail("[pipeline] window", "end " + std::to_string(c.pipeline.window.end) + " exceeds [cohort] record_length " +
                                  std::to_string(c.synth.record_length));
  if (c.pipeline.window.length() < 8) fail("[pipeline] window", "needs at least 8 samples for sifting");
  try {
    (void)c.make_geometry().validate();
  } catch (const std::exception& e) {
    fail("[geometry]", e.what());
  }
  const auto& d = c.dataset.debye;
  if (d.eps_inf.lo < 1.0) fail("[debye] eps_inf", "must be >= 1");
  if (d.delta_eps.lo < 0.0) fail("[debye] delta_eps", "must be >= 0");
  if (!(d.tau.lo > 0.0)) fail("[debye] tau", "must be positive");
  if (d.sigma_s.lo < 0.0) fail("[debye] sigma_s", "must be >= 0");
  if (c.dataset.region.az_min_deg < -180.0 || c.dataset.region.az_max_deg > 180.0)
    fail("[tumour] azimuth", "must lie within [-180, 180] degrees");
  if (c.dataset.region.margin >= c.geometry.breast_radius) fail("[tumour] margin", "must be below the breast radius");
  if (c.gamma_modes.empty()) fail("[eval] gamma_modes", "needs at least one feature mode");
}

/// Defaults, then the desk-scale preset, then the file entries.
inline ExperimentConfig resolve_config(const std::vector<ConfigEntry>& entries, bool desk_scale_flag) {
  ExperimentConfig c;
  bool desk = desk_scale_flag;
  for (const auto& e : entries)
    if (e.section == "run" && e.key == "desk_scale") {
      try {
        desk = desk || config_detail::to_bool(e.value);
      } catch (const std::invalid_argument& ex) {
        throw ConfigError("[run] desk_scale: " + std::string(ex.what()));
      }
    }
  if (desk) apply_desk_scale(c);
  auto fields = config_fields(c);
  std::set<std::string> sections;
  for (const auto& f : fields) sections.insert(f.section);
  for (const auto& e : entries) {
    const std::string name = "[" + e.section + "] " + e.key;
    if (e.section.empty())
      throw ConfigError("line " + std::to_string(e.line) + ": key '" + e.key + "' is outside any section");
    if (!sections.count(e.section))
      throw ConfigError("line " + std::to_string(e.line) + ": unknown section [" + e.section + "]");
    auto it = std::find_if(fields.begin(), fields.end(),
                           [&](const ConfigField& f) { return f.section == e.section && f.key == e.key; });
    if (it == fields.end()) throw ConfigError(name + ": unknown field (line " + std::to_string(e.line) + ")");
    if (e.value.empty()) throw ConfigError(name + ": missing value (line " + std::to_string(e.line) + ")");
    try {
      it->set(e.value);
    } catch (const std::invalid_argument& ex) {
      throw ConfigError(name + ": " + ex.what() + " (line " + std::to_string(e.line) + ")");
    }
  }
  if (desk) c.desk_scale = true;
  validate_config(c);
  return c;
}

inline ExperimentConfig load_config(std::istream& in, bool desk_scale_flag = false) {
  return resolve_config(parse_config_text(in), desk_scale_flag);
}

/// EMD_SEED overrides the file; an explicit seed argument overrides both.
inline void apply_seed_overrides(ExperimentConfig& c, std::optional<std::uint64_t> flag) {
  if (const char* env = std::getenv("EMD_SEED"); env && *env) {
    try {
      c.seed = config_detail::to_u64(env);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("EMD_SEED: ") + e.what());
    }
  }
  if (flag) c.seed = *flag;
}

inline std::string resolved_config_text(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  std::string out = "# resolved configuration\n";
  std::string section;
  for (const auto& f : config_fields(c)) {
    if (f.section != section) {
      section = f.section;
      out += "\n[" + section + "]\n";
    }
    out += f.key + " = " + f.get() + "\n";
  }
  return out;
}

}  // namespace emdscan
