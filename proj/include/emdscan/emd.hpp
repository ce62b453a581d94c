#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "emdscan/error.hpp"
#include "emdscan/signal.hpp"

namespace emdscan {

struct Extrema {
  std::vector<std::size_t> maxima;  // 0-based sample indices
  std::vector<std::size_t> minima;

  std::size_t count() const noexcept { return maxima.size() + minima.size(); }
};

/// Interior local extrema. A flat run that is higher (lower) than both of its
/// neighbours counts as one maximum (minimum) at its midpoint, rounded down.
inline Extrema find_extrema(std::span<const double> x) {
  Extrema e;
  const std::size_t n = x.size();
  if (n < 3) return e;
  std::size_t i = 1;
  while (i + 1 < n) {
    if (x[i] == x[i - 1]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < n && x[j + 1] == x[i]) ++j;
    if (j + 1 >= n) break;  // run reaches the last sample
    const bool up = x[i] > x[i - 1];
    const bool down = x[j + 1] < x[j];
    const std::size_t mid = i + (j - i) / 2;
    if (up && down)
      e.maxima.push_back(mid);
    else if (!up && !down)
      e.minima.push_back(mid);
    i = j + 1;
  }
  return e;
}

inline std::size_t count_zero_crossings(std::span<const double> x) {
  std::size_t n = 0;
  int last = 0;
  for (double v : x) {
    const int s = (v > 0.0) - (v < 0.0);
    if (s == 0) continue;
    if (last != 0 && s != last) ++n;
    last = s;
  }
  return n;
}

struct C1Count {
  std::size_t n_extrema = 0;
  std::size_t n_zero_crossings = 0;
  bool passes = false;
};

inline C1Count count_c1(std::span<const double> x) {
  C1Count c;
  c.n_extrema = find_extrema(x).count();
  c.n_zero_crossings = count_zero_crossings(x);
  const auto diff =
      c.n_extrema > c.n_zero_crossings ? c.n_extrema - c.n_zero_crossings : c.n_zero_crossings - c.n_extrema;
  c.passes = diff <= 1;
  return c;
}

/// Natural cubic spline through strictly increasing knots.
class NaturalSpline {
 public:
  NaturalSpline(std::vector<double> knots, std::vector<double> values)
      : t_(std::move(knots)), y_(std::move(values)), m_(t_.size(), 0.0) {
    const std::size_t n = t_.size();
    if (n < 2 || y_.size() != n) throw std::invalid_argument("spline needs >= 2 knots with matching values");
    if (n == 2) return;
    // Thomas algorithm on the interior second derivatives.
    std::vector<double> c(n, 0.0), d(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double h0 = t_[i] - t_[i - 1];
      const double h1 = t_[i + 1] - t_[i];
      const double a = h0;
      const double b = 2.0 * (h0 + h1);
      const double rhs = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
      const double denom = b - a * c[i - 1];
      c[i] = h1 / denom;
      d[i] = (rhs - a * d[i - 1]) / denom;
    }
    for (std::size_t i = n - 2; i >= 1; --i) m_[i] = d[i] - c[i] * m_[i + 1];
  }

  /// Evaluates at 0, 1, ..., count-1; outside the knot range the end cubic is extended.
  std::vector<double> sample(std::size_t count) const {
    std::vector<double> out(count);
    std::size_t seg = 0;
    const std::size_t last = t_.size() - 2;
    for (std::size_t k = 0; k < count; ++k) {
      const double x = static_cast<double>(k);
      while (seg < last && x > t_[seg + 1]) ++seg;
      out[k] = eval_segment(seg, x);
    }
    return out;
  }

 private:
  double eval_segment(std::size_t i, double x) const {
    const double h = t_[i + 1] - t_[i];
    const double a = (t_[i + 1] - x) / h;
    const double b = (x - t_[i]) / h;
    return a * y_[i] + b * y_[i + 1] + ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
  }

  std::vector<double> t_, y_, m_;
};

enum class BoundaryPolicy { Mirror, None };
enum class Interpolation { NaturalCubic, Linear };

namespace detail {

inline std::vector<double> interpolate(const std::vector<double>& knots, const std::vector<double>& values,
                                       std::size_t count, Interpolation kind) {
  if (kind == Interpolation::NaturalCubic) return NaturalSpline(knots, values).sample(count);
  std::vector<double> out(count);
  std::size_t seg = 0;
  for (std::size_t k = 0; k < count; ++k) {
    const double x = static_cast<double>(k);
    while (seg + 2 < knots.size() && x > knots[seg + 1]) ++seg;
    const double w = (x - knots[seg]) / (knots[seg + 1] - knots[seg]);
    out[k] = values[seg] + w * (values[seg + 1] - values[seg]);
  }
  return out;
}

inline std::vector<double> envelope(std::span<const double> x, const std::vector<std::size_t>& idx,
                                    BoundaryPolicy policy, Interpolation kind) {
  const double last = static_cast<double>(x.size() - 1);
  std::vector<double> knots, values;
  knots.reserve(idx.size() + 4);
  values.reserve(idx.size() + 4);
  if (policy == BoundaryPolicy::Mirror) {
    for (std::size_t k = std::min<std::size_t>(2, idx.size()); k-- > 0;) {
      knots.push_back(-static_cast<double>(idx[k]));
      values.push_back(x[idx[k]]);
    }
  }
  for (auto i : idx) {
    knots.push_back(static_cast<double>(i));
    values.push_back(x[i]);
  }
  if (policy == BoundaryPolicy::Mirror) {
    const std::size_t m = std::min<std::size_t>(2, idx.size());
    for (std::size_t k = 0; k < m; ++k) {
      const auto src = idx[idx.size() - 1 - k];
      knots.push_back(2.0 * last - static_cast<double>(src));
      values.push_back(x[src]);
    }
  }
  return interpolate(knots, values, x.size(), kind);
}

}  // namespace detail

struct Envelopes {
  std::vector<double> upper;
  std::vector<double> lower;
};

/// Upper/lower envelopes through the given maxima/minima. The spline may overshoot,
/// so upper >= lower is not guaranteed.
inline Envelopes envelopes(std::span<const double> x, const Extrema& ext,
                           BoundaryPolicy policy = BoundaryPolicy::Mirror,
                           Interpolation kind = Interpolation::NaturalCubic) {
  if (ext.maxima.size() < 2 || ext.minima.size() < 2)
    throw InsufficientExtrema("envelopes need at least 2 maxima and 2 minima (got " +
                              std::to_string(ext.maxima.size()) + " and " + std::to_string(ext.minima.size()) + ")");
  return {detail::envelope(x, ext.maxima, policy, kind), detail::envelope(x, ext.minima, policy, kind)};
}

struct SiftConfig {
  int n_imf_max = 5;
  int max_sift_iters = 64;
  double c2_tol = 0.05;  // mean-envelope RMS relative to candidate RMS
  BoundaryPolicy boundary = BoundaryPolicy::Mirror;
  Interpolation interpolation = Interpolation::NaturalCubic;

  void validate() const {
    if (n_imf_max < 1) throw std::invalid_argument("n_imf_max must be >= 1");
    if (max_sift_iters < 1) throw std::invalid_argument("max_sift_iters must be >= 1");
    if (!(c2_tol > 0.0)) throw std::invalid_argument("c2_tol must be positive");
  }
};

/// IMFs d_1..d_K plus residue; the sum reconstructs the input.
struct ImfSet {
  std::vector<std::vector<double>> imfs;
  std::vector<double> residue;
  std::vector<bool> not_converged;  // per IMF: accepted without passing C1 and C2
  std::size_t source_len = 0;

  bool warned() const {
    for (bool w : not_converged)
      if (w) return true;
    return false;
  }

  std::vector<double> reconstruct() const {
    std::vector<double> out = residue;
    for (const auto& d : imfs)
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += d[i];
    return out;
  }
};

inline double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

inline ImfSet sift(std::span<const double> x, const SiftConfig& cfg = {}) {
  cfg.validate();
  if (x.size() < 8) throw std::invalid_argument("sift needs at least 8 samples");
  for (double v : x)
    if (!std::isfinite(v)) throw std::invalid_argument("sift input contains a non-finite sample");

  ImfSet out;
  out.source_len = x.size();
  std::vector<double> r(x.begin(), x.end());
  std::vector<double> mean(x.size());

  while (static_cast<int>(out.imfs.size()) < cfg.n_imf_max) {
    if (find_extrema(r).count() < 3) break;
    std::vector<double> z = r;
    bool passed = false;
    bool stop = false;
    for (int it = 0; it < cfg.max_sift_iters; ++it) {
      const Extrema ext = find_extrema(z);
      if (ext.maxima.size() < 2 || ext.minima.size() < 2) {
        // Nothing left to sift: either the residue itself, or a candidate that lost its oscillation.
        stop = it == 0;
        break;
      }
      const Envelopes env = envelopes(z, ext, cfg.boundary, cfg.interpolation);
      for (std::size_t i = 0; i < z.size(); ++i) mean[i] = 0.5 * (env.upper[i] + env.lower[i]);
      if (count_c1(z).passes && rms(mean) < cfg.c2_tol * rms(z)) {
        passed = true;
        break;
      }
      for (std::size_t i = 0; i < z.size(); ++i) z[i] -= mean[i];
    }
    if (stop) break;
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= z[i];
    out.not_converged.push_back(!passed);
    out.imfs.push_back(std::move(z));
  }
  out.residue = std::move(r);
  return out;
}

inline ImfSet sift(const TimeSeries& x, const SiftConfig& cfg = {}) { return sift(x.view(), cfg); }

}  // namespace emdscan
