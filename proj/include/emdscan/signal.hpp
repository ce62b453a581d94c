#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace emdscan {

inline constexpr int kNumAntennas = 16;
inline constexpr int kNumPairs = kNumAntennas * (kNumAntennas - 1);  // 240

/// One antenna-pair recording: uniformly sampled voltages.
struct TimeSeries {
  std::vector<double> samples;
  double dt = 25e-12;

  TimeSeries() = default;
  TimeSeries(std::vector<double> s, double sample_interval) : samples(std::move(s)), dt(sample_interval) {}

  std::size_t size() const noexcept { return samples.size(); }
  std::span<const double> view() const noexcept { return samples; }

  /// Throws std::invalid_argument unless length >= 2, dt > 0 and all samples finite.
  void validate() const {
    if (samples.size() < 2) throw std::invalid_argument("time series needs at least 2 samples");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("time series dt must be positive");
    for (double v : samples)
      if (!std::isfinite(v)) throw std::invalid_argument("time series contains a non-finite sample");
  }

  bool operator==(const TimeSeries&) const = default;
};

/// Ordered (transmitter, receiver) antenna pair, 1-based antenna indices.
struct AntennaPairId {
  int tx = 1;
  int rx = 2;

  constexpr AntennaPairId() = default;
  constexpr AntennaPairId(int t, int r) : tx(t), rx(r) {}

  constexpr bool valid() const noexcept {
    return tx >= 1 && tx <= kNumAntennas && rx >= 1 && rx <= kNumAntennas && tx != rx;
  }

  /// Dense index in [0, 240) ordered by (tx, rx).
  constexpr int index() const noexcept { return (tx - 1) * (kNumAntennas - 1) + (rx < tx ? rx - 1 : rx - 2); }

  static constexpr AntennaPairId from_index(int idx) {
    const int tx = idx / (kNumAntennas - 1) + 1;
    int rx = idx % (kNumAntennas - 1) + 1;
    if (rx >= tx) ++rx;
    return {tx, rx};
  }

  std::string str() const { return std::to_string(tx) + "-" + std::to_string(rx); }

  static AntennaPairId parse(const std::string& s) {
    const auto dash = s.find('-');
    if (dash == std::string::npos || dash == 0 || dash + 1 == s.size())
      throw std::invalid_argument("antenna pair must look like 'tx-rx', got '" + s + "'");
    std::size_t used_tx = 0;
    std::size_t used_rx = 0;
    AntennaPairId p;
    try {
      p.tx = std::stoi(s.substr(0, dash), &used_tx);
      p.rx = std::stoi(s.substr(dash + 1), &used_rx);
    } catch (const std::exception&) {
      throw std::invalid_argument("antenna pair must look like 'tx-rx', got '" + s + "'");
    }
    if (used_tx != dash || used_rx != s.size() - dash - 1 || !p.valid())
      throw std::invalid_argument("invalid antenna pair '" + s + "'");
    return p;
  }

  auto operator<=>(const AntennaPairId&) const = default;
};

inline std::vector<AntennaPairId> all_pairs() {
  std::vector<AntennaPairId> out;
  out.reserve(kNumPairs);
  for (int i = 0; i < kNumPairs; ++i) out.push_back(AntennaPairId::from_index(i));
  return out;
}

enum class Side { Left, Right };
enum class Label { Healthy, Tumour };

inline char side_code(Side s) { return s == Side::Left ? 'L' : 'R'; }
inline char label_code(Label l) { return l == Label::Healthy ? 'H' : 'T'; }

using Vec3 = std::array<double, 3>;

/// One multistatic measurement of one breast during one visit.
struct Scan {
  int volunteer = 1;
  int visit = 1;
  Side side = Side::Left;
  Label label = Label::Healthy;
  std::optional<Vec3> tumour_pos;
  std::map<AntennaPairId, TimeSeries> signals;

  const TimeSeries& signal(const AntennaPairId& p) const {
    auto it = signals.find(p);
    if (it == signals.end())
      throw std::invalid_argument("scan " + std::to_string(volunteer) + "/" + std::to_string(visit) + side_code(side) +
                                  " has no signal for pair " + p.str());
    return it->second;
  }

  void validate() const {
    if (volunteer < 1) throw std::invalid_argument("volunteer id must be >= 1");
    if (visit < 1) throw std::invalid_argument("visit index must be >= 1");
    if ((label == Label::Tumour) != tumour_pos.has_value())
      throw std::invalid_argument("tumour label and tumour position must agree");
    const TimeSeries* first = nullptr;
    for (const auto& [pair, ts] : signals) {
      if (!pair.valid()) throw std::invalid_argument("invalid antenna pair " + pair.str());
      ts.validate();
      if (first && (ts.size() != first->size() || ts.dt != first->dt))
        throw std::invalid_argument("signals of one scan must share length and dt");
      first = &ts;
    }
  }

  bool operator==(const Scan&) const = default;
};

/// 1-based inclusive sample range.
struct WindowSpec {
  std::size_t start = 1;
  std::size_t end = 1;

  std::size_t length() const noexcept { return end - start + 1; }
  bool valid_for(std::size_t n) const noexcept { return start >= 1 && start <= end && end <= n; }
  static WindowSpec full(std::size_t n) { return {1, n}; }
};

inline std::span<const double> window_view(std::span<const double> x, const WindowSpec& w) {
  if (!w.valid_for(x.size()))
    throw std::out_of_range("window [" + std::to_string(w.start) + ", " + std::to_string(w.end) +
                            "] does not fit a signal of length " + std::to_string(x.size()));
  return x.subspan(w.start - 1, w.length());
}

inline TimeSeries window(const TimeSeries& x, const WindowSpec& w) {
  auto v = window_view(x.view(), w);
  return {std::vector<double>(v.begin(), v.end()), x.dt};
}

/// Window taken `shift` samples later in the recording, i.e. the view of a copy delayed by -shift.
inline std::span<const double> shifted_window_view(std::span<const double> x, const WindowSpec& w, long shift) {
  const long start = static_cast<long>(w.start) + shift;
  const long end = static_cast<long>(w.end) + shift;
  if (start < 1 || end > static_cast<long>(x.size())) throw std::out_of_range("shifted window leaves the recording");
  return window_view(x, {static_cast<std::size_t>(start), static_cast<std::size_t>(end)});
}

inline double peak_amplitude(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty list");
  const std::size_t h = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<long>(h), v.end());
  const double hi = v[h];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<long>(h));
  return 0.5 * (lo + hi);
}

/// Median over scans of the windowed peak |sample| for every pair present in the first scan.
inline std::map<AntennaPairId, double> median_peaks(std::span<const Scan> scans, const WindowSpec& w) {
  if (scans.empty()) throw std::invalid_argument("median_peaks needs at least one scan");
  std::map<AntennaPairId, double> out;
  for (const auto& [pair, _] : scans.front().signals) {
    std::vector<double> peaks;
    peaks.reserve(scans.size());
    for (const auto& s : scans) peaks.push_back(peak_amplitude(window_view(s.signal(pair).view(), w)));
    out[pair] = median(std::move(peaks));
  }
  return out;
}

/// Pairs whose median windowed peak amplitude over the training scans reaches `threshold` volts.
inline std::set<AntennaPairId> filter_pairs(std::span<const Scan> training_scans, double threshold,
                                            const WindowSpec& w) {
  if (training_scans.empty()) throw std::invalid_argument("filter_pairs needs at least one training scan");
  std::set<AntennaPairId> kept;
  for (const auto& [pair, med] : median_peaks(training_scans, w))
    if (med >= threshold) kept.insert(pair);
  return kept;
}

}  // namespace emdscan
