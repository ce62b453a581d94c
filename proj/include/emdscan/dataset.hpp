#pragma once

// Synthetic stand-in for a clinical multistatic radar cohort, plus the
// experimental protocol built on top of it: tumour-bearing datasets and
// leave-two-volunteers-out training/testing splits.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <numeric>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "emdscan/rng.hpp"
#include "emdscan/signal.hpp"
#include "emdscan/tumor.hpp"

namespace emdscan {

/// Visits per volunteer, volunteers 1..12.
inline const std::vector<int>& default_visit_table() {
  static const std::vector<int> t = {3, 3, 4, 5, 2, 6, 6, 4, 4, 4, 3, 4};
  return t;
}

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double sample(Rng& rng) const { return lo == hi ? lo : uniform(rng, lo, hi); }
  bool contains(double v) const { return v >= lo && v <= hi; }
};

struct DebyeRanges {
  Range eps_inf{3.0, 10.0};
  Range delta_eps{1.0, 10.0};
  Range tau{7e-12, 13e-12};
  Range sigma_s{0.05, 0.8};

  DebyeParams sample(Rng& rng) const {
    DebyeParams p;
    p.eps_inf = eps_inf.sample(rng);
    p.delta_eps = delta_eps.sample(rng);
    p.tau = tau.sample(rng);
    p.sigma_s = sigma_s.sample(rng);
    return p;
  }
};

/// Upper-outer quadrant: azimuth in [az_min, az_max] degrees, at least `margin` metres
/// inside both the dome and the chest-wall plane.
struct TumourRegion {
  double az_min_deg = 0.0;
  double az_max_deg = 90.0;
  double margin = 0.005;

  bool contains(const Geometry& g, const Vec3& p) const {
    if (!g.inside(p)) return false;
    if (std::hypot(p[0], p[1], p[2]) > g.breast_radius - margin || p[2] > -margin) return false;
    const double az = std::atan2(p[1], p[0]) * 180.0 / std::numbers::pi;
    return az >= az_min_deg && az <= az_max_deg;
  }

  Vec3 sample(const Geometry& g, Rng& rng) const {
    const double r = g.breast_radius;
    for (int attempt = 0; attempt < 100000; ++attempt) {
      const Vec3 p{uniform(rng, -r, r), uniform(rng, -r, r), uniform(rng, -r, 0.0)};
      if (contains(g, p)) return p;
    }
    throw std::runtime_error("tumour region is empty");
  }
};

/// Knobs of the synthetic baseline recordings. Sample counts are in samples.
struct SynthConfig {
  std::size_t record_length = 1024;
  double dt = 25e-12;
  double system_delay = 150.0;    // samples before a zero-length direct path would arrive
  double pulse_width = 2.0;       // Gaussian sigma of the differentiated-Gaussian pulse
  double amplitude = 0.4;         // volts at zero separation
  double decay_length = 0.08;     // metres; amplitude ~ exp(-distance / decay_length)
  double volunteer_spread = 0.2;  // log-normal sd of the per-volunteer pair gain
  double volunteer_delay = 3.0;   // per-volunteer arrival offset, uniform +-samples
  int multipath_count = 4;
  Range multipath_delay{15.0, 250.0};
  Range multipath_amplitude{0.05, 0.3};
  Range multipath_width{1.0, 8.0};  // relative to pulse_width
  double visit_amplitude = 0.05;    // uniform +- fraction per recording
  int jitter = 4;                   // integer shift uniform in [-jitter, jitter]
  double snr_db = 40.0;
  int generated_pairs = 0;  // 0: all 240 pairs; otherwise a spread subset
};

struct VolunteerProfile {
  int id = 1;
  int n_visits = 1;
  std::uint64_t seed = 0;
};

struct Echo {
  double delay = 0.0;
  double amplitude = 0.0;
  double width = 1.0;
};

/// Volunteer-fixed part of one pair's recording.
struct PairTemplate {
  double gain = 0.0;
  double arrival = 0.0;  // samples
  std::vector<Echo> echoes;
};

inline PairTemplate pair_template(const VolunteerProfile& v, Side side, const AntennaPairId& pair,
                                  const SynthConfig& cfg, const Geometry& g) {
  auto rng = make_rng(v.seed, {1, static_cast<std::uint64_t>(side), static_cast<std::uint64_t>(pair.index())});
  const double d = distance(g.antenna(pair.tx), g.antenna(pair.rx));
  PairTemplate t;
  t.gain = cfg.amplitude * std::exp(-d / cfg.decay_length) * std::exp(normal(rng, 0.0, cfg.volunteer_spread));
  t.arrival = cfg.system_delay + d * std::sqrt(g.eps_im) / kSpeedOfLight / cfg.dt +
              uniform(rng, -cfg.volunteer_delay, cfg.volunteer_delay);
  for (int k = 0; k < cfg.multipath_count; ++k) {
    Echo e;
    e.delay = cfg.multipath_delay.sample(rng);
    e.amplitude = cfg.multipath_amplitude.sample(rng) * (uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0);
    e.width = cfg.multipath_width.sample(rng) * cfg.pulse_width;
    t.echoes.push_back(e);
  }
  return t;
}

/// Differentiated Gaussian scaled to unit peak.
inline double monocycle(double t, double width) {
  const double u = t / width;
  return -u * std::exp(0.5 - 0.5 * u * u);
}

/// The pairs a cohort records. With `count` > 0, pairs are ordered by antenna separation and
/// `count` of them are taken at evenly spaced ranks, so near and far pairs are both represented.
inline std::vector<AntennaPairId> generated_pairs(const Geometry& g, int count) {
  auto pairs = all_pairs();
  if (count <= 0 || count >= kNumPairs) return pairs;
  std::stable_sort(pairs.begin(), pairs.end(), [&](const auto& a, const auto& b) {
    return distance(g.antenna(a.tx), g.antenna(a.rx)) < distance(g.antenna(b.tx), g.antenna(b.rx));
  });
  std::vector<AntennaPairId> out;
  for (int k = 0; k < count; ++k)
    out.push_back(pairs[static_cast<std::size_t>(k) * kNumPairs / static_cast<std::size_t>(count)]);
  std::sort(out.begin(), out.end());
  return out;
}

/// One healthy scan; deterministic in (profile seed, visit, side, pair).
inline Scan synth_scan(const VolunteerProfile& v, int visit, Side side, std::span<const AntennaPairId> pairs,
                       const SynthConfig& cfg, const Geometry& g) {
  Scan s;
  s.volunteer = v.id;
  s.visit = visit;
  s.side = side;
  s.label = Label::Healthy;
  const std::size_t n = cfg.record_length;
  for (const auto& pair : pairs) {
    const auto t = pair_template(v, side, pair, cfg, g);
    auto rng = make_rng(v.seed, {2, static_cast<std::uint64_t>(visit), static_cast<std::uint64_t>(side),
                                 static_cast<std::uint64_t>(pair.index())});
    const double scale = t.gain * (1.0 + uniform(rng, -cfg.visit_amplitude, cfg.visit_amplitude));
    const int shift = cfg.jitter > 0 ? uniform_int(rng, -cfg.jitter, cfg.jitter) : 0;
    std::vector<double> x(n);
    double power = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double tt = static_cast<double>(i) - t.arrival - shift;
      double v0 = monocycle(tt, cfg.pulse_width);
      for (const auto& e : t.echoes) v0 += e.amplitude * monocycle(tt - e.delay, e.width);
      x[i] = scale * v0;
      power += x[i] * x[i];
    }
    const double noise_sd = std::sqrt(power / static_cast<double>(n)) * std::pow(10.0, -cfg.snr_db / 20.0);
    for (auto& val : x) val += normal(rng, 0.0, noise_sd);
    s.signals.emplace(pair, TimeSeries(std::move(x), cfg.dt));
  }
  return s;
}

struct CohortConfig {
  std::vector<int> visits = default_visit_table();
  SynthConfig synth;
  Geometry geometry = make_geometry();
  std::uint64_t seed = 7;
};

/// All healthy baseline scans, ordered by volunteer, visit, then left before right.
struct Cohort {
  CohortConfig config;
  std::vector<VolunteerProfile> profiles;
  std::vector<AntennaPairId> pairs;
  std::vector<Scan> scans;
};

inline Cohort build_cohort(const CohortConfig& cfg) {
  Cohort c;
  c.config = cfg;
  c.pairs = generated_pairs(cfg.geometry, cfg.synth.generated_pairs);
  for (std::size_t i = 0; i < cfg.visits.size(); ++i) {
    VolunteerProfile p{static_cast<int>(i) + 1, cfg.visits[i], derive_seed(cfg.seed, {100, i + 1})};
    if (p.n_visits < 1) throw std::invalid_argument("every volunteer needs at least one visit");
    c.profiles.push_back(p);
  }
  c.scans.reserve(static_cast<std::size_t>(std::accumulate(cfg.visits.begin(), cfg.visits.end(), 0)) * 2);
  for (const auto& p : c.profiles)
    for (int visit = 1; visit <= p.n_visits; ++visit)
      for (Side side : {Side::Left, Side::Right})
        c.scans.push_back(synth_scan(p, visit, side, c.pairs, cfg.synth, cfg.geometry));
  return c;
}

/// Injects a tumour at `pos` into every signal of a healthy scan.
inline Scan inject_scan(const Scan& healthy, const Geometry& g, const Vec3& pos, double gamma,
                        const DebyeParams& breast) {
  Scan s = healthy;
  s.label = Label::Tumour;
  s.tumour_pos = pos;
  for (auto& [pair, ts] : s.signals) ts = inject(ts, g, pair, pos, gamma, breast);
  return s;
}

struct TumourSite {
  std::size_t scan_index = 0;
  Vec3 pos{};
};

struct DatasetConfig {
  double gamma = 1.0;
  DebyeRanges debye;
  TumourRegion region;
};

/// One tumour-bearing realisation of a cohort.
struct Dataset {
  int index = 0;
  std::uint64_t seed = 0;
  double gamma = 1.0;
  Geometry geometry;
  std::map<int, DebyeParams> debye;  // per volunteer
  std::vector<TumourSite> tumours;
  std::vector<Scan> carriers;  // healthy recordings the tumours were injected into, aligned with `tumours`
  std::vector<Scan> scans;

  std::set<int> volunteers() const {
    std::set<int> v;
    for (const auto& s : scans) v.insert(s.volunteer);
    return v;
  }
};

/// floor(N/2) random visits per volunteer become tumour-bearing, with one random breast each.
inline Dataset build_dataset(const Cohort& cohort, int index, std::uint64_t master_seed, const DatasetConfig& cfg) {
  Dataset d;
  d.index = index;
  d.seed = derive_seed(master_seed, {200, static_cast<std::uint64_t>(index)});
  d.gamma = cfg.gamma;
  d.geometry = cohort.config.geometry;
  d.scans = cohort.scans;
  for (const auto& p : cohort.profiles) {
    auto rng = make_rng(d.seed, {static_cast<std::uint64_t>(p.id)});
    d.debye[p.id] = cfg.debye.sample(rng);
    std::vector<int> visits(static_cast<std::size_t>(p.n_visits));
    std::iota(visits.begin(), visits.end(), 1);
    std::shuffle(visits.begin(), visits.end(), rng);
    visits.resize(static_cast<std::size_t>(p.n_visits / 2));
    std::sort(visits.begin(), visits.end());
    for (int visit : visits) {
      const Side side = uniform_int(rng, 0, 1) == 0 ? Side::Left : Side::Right;
      const Vec3 pos = cfg.region.sample(d.geometry, rng);
      for (std::size_t i = 0; i < d.scans.size(); ++i) {
        const auto& s = d.scans[i];
        if (s.volunteer == p.id && s.visit == visit && s.side == side) d.tumours.push_back({i, pos});
      }
    }
  }
  for (const auto& t : d.tumours) {
    d.carriers.push_back(d.scans[t.scan_index]);
    d.scans[t.scan_index] =
        inject_scan(d.carriers.back(), d.geometry, t.pos, d.gamma, d.debye.at(d.scans[t.scan_index].volunteer));
  }
  return d;
}

/// Same tumours and permittivities with a different response attenuation.
inline Dataset with_gamma(const Dataset& d, double gamma) {
  Dataset out = d;
  out.gamma = gamma;
  for (std::size_t k = 0; k < d.tumours.size(); ++k) {
    const auto i = d.tumours[k].scan_index;
    out.scans[i] = inject_scan(d.carriers[k], d.geometry, d.tumours[k].pos, gamma, d.debye.at(d.scans[i].volunteer));
  }
  return out;
}

struct Augment {
  int volunteer = 0;
  int visit = 0;
  Side side = Side::Left;
  Vec3 pos{};
};

/// Leave-two-volunteers-out split. Test-side healthy scans listed in `augments` get an extra
/// tumour-injected copy so the test set is balanced.
struct Split {
  std::vector<int> train_volunteers;
  std::array<int, 2> test_volunteers{};
  std::vector<Augment> augments;
};

/// One split per unordered volunteer pair, in lexicographic order.
inline std::vector<Split> make_splits(const Dataset& d, const TumourRegion& region = {}) {
  const auto vols = d.volunteers();
  const std::vector<int> ids(vols.begin(), vols.end());
  std::vector<Split> out;
  for (std::size_t a = 0; a < ids.size(); ++a) {
    for (std::size_t b = a + 1; b < ids.size(); ++b) {
      Split s;
      s.test_volunteers = {ids[a], ids[b]};
      for (int v : ids)
        if (v != ids[a] && v != ids[b]) s.train_volunteers.push_back(v);
      std::vector<std::size_t> healthy;
      std::size_t tumour = 0;
      for (std::size_t i = 0; i < d.scans.size(); ++i) {
        const auto& sc = d.scans[i];
        if (sc.volunteer != ids[a] && sc.volunteer != ids[b]) continue;
        if (sc.label == Label::Healthy)
          healthy.push_back(i);
        else
          ++tumour;
      }
      auto rng = make_rng(d.seed, {300, static_cast<std::uint64_t>(ids[a]), static_cast<std::uint64_t>(ids[b])});
      std::shuffle(healthy.begin(), healthy.end(), rng);
      const std::size_t need = healthy.size() > tumour ? healthy.size() - tumour : 0;
      healthy.resize(need);
      std::sort(healthy.begin(), healthy.end());
      for (auto i : healthy) {
        const auto& sc = d.scans[i];
        s.augments.push_back({sc.volunteer, sc.visit, sc.side, region.sample(d.geometry, rng)});
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

struct SplitScans {
  std::vector<Scan> train;
  std::vector<Scan> test;
};

inline const Scan& find_scan(std::span<const Scan> scans, int volunteer, int visit, Side side) {
  for (const auto& s : scans)
    if (s.volunteer == volunteer && s.visit == visit && s.side == side) return s;
  throw std::invalid_argument("no scan for volunteer " + std::to_string(volunteer) + " visit " + std::to_string(visit));
}

inline SplitScans split_scans(const Dataset& d, const Split& split) {
  SplitScans out;
  const std::set<int> train(split.train_volunteers.begin(), split.train_volunteers.end());
  for (const auto& s : d.scans) {
    if (train.count(s.volunteer))
      out.train.push_back(s);
    else if (s.volunteer == split.test_volunteers[0] || s.volunteer == split.test_volunteers[1])
      out.test.push_back(s);
  }
  for (const auto& a : split.augments) {
    const auto& carrier = find_scan(d.scans, a.volunteer, a.visit, a.side);
    out.test.push_back(inject_scan(carrier, d.geometry, a.pos, d.gamma, d.debye.at(a.volunteer)));
  }
  return out;
}

/// Protocol invariants of one dataset and its splits.
struct ProtocolCheck {
  std::size_t splits = 0;
  std::size_t expected_splits = 0;
  std::size_t tumour_scans = 0;
  double min_train_ratio = 0.0;  // healthy : tumour in the training side
  double max_train_ratio = 0.0;
  bool test_balanced = true;
  bool disjoint = true;

  bool ok(double lo = 2.5, double hi = 3.5) const {
    return splits == expected_splits && min_train_ratio >= lo && max_train_ratio <= hi && test_balanced && disjoint;
  }
};

inline ProtocolCheck check_protocol(const Dataset& d, std::span<const Split> splits) {
  ProtocolCheck c;
  const auto vols = d.volunteers();
  c.expected_splits = vols.size() * (vols.size() - 1) / 2;
  c.splits = splits.size();
  for (const auto& s : d.scans) c.tumour_scans += s.label == Label::Tumour;
  c.min_train_ratio = std::numeric_limits<double>::infinity();
  c.max_train_ratio = 0.0;
  for (const auto& sp : splits) {
    const std::set<int> train(sp.train_volunteers.begin(), sp.train_volunteers.end());
    const std::set<int> test(sp.test_volunteers.begin(), sp.test_volunteers.end());
    for (int v : test) c.disjoint = c.disjoint && !train.count(v);
    c.disjoint = c.disjoint && test.size() == 2 && train.size() + test.size() == vols.size();
    std::size_t th = 0, tt = 0, eh = 0, et = 0;
    for (const auto& s : d.scans) {
      const bool tumour = s.label == Label::Tumour;
      if (train.count(s.volunteer))
        (tumour ? tt : th) += 1;
      else if (test.count(s.volunteer))
        (tumour ? et : eh) += 1;
    }
    for (const auto& a : sp.augments) c.disjoint = c.disjoint && test.count(a.volunteer) && !train.count(a.volunteer);
    et += sp.augments.size();
    c.test_balanced = c.test_balanced && eh == et;
    const double ratio =
        tt ? static_cast<double>(th) / static_cast<double>(tt) : std::numeric_limits<double>::infinity();
    c.min_train_ratio = std::min(c.min_train_ratio, ratio);
    c.max_train_ratio = std::max(c.max_train_ratio, ratio);
  }
  return c;
}

}  // namespace emdscan
