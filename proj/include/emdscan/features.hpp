#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "emdscan/emd.hpp"

namespace emdscan {

inline constexpr std::size_t kImfsUsed = 5;
inline constexpr std::size_t kEmdFeatures = 4 * kImfsUsed;  // 20

struct ImfStats {
  double mu = 0.0;     // mean absolute value
  double sigma = 0.0;  // population standard deviation
  double kappa = 0.0;  // m4 / m2^2 about the mean; 0 when sigma == 0
  double s = 0.0;      // mean absolute successive difference
};

inline ImfStats imf_stats(std::span<const double> d) {
  const std::size_t n = d.size();
  if (n < 2) throw std::invalid_argument("imf_stats needs at least 2 samples");
  const double inv_n = 1.0 / static_cast<double>(n);
  double abs_sum = 0.0, sum = 0.0, succ = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    abs_sum += std::abs(d[i]);
    sum += d[i];
    if (i + 1 < n) succ += std::abs(d[i + 1] - d[i]);
  }
  const double mean = sum * inv_n;
  double m2 = 0.0, m4 = 0.0;
  for (double v : d) {
    const double c = v - mean;
    const double c2 = c * c;
    m2 += c2;
    m4 += c2 * c2;
  }
  m2 *= inv_n;
  m4 *= inv_n;
  ImfStats st;
  st.mu = abs_sum * inv_n;
  st.sigma = std::sqrt(m2);
  st.kappa = m2 > 0.0 ? m4 / (m2 * m2) : 0.0;
  st.s = succ / static_cast<double>(n - 1);
  return st;
}

/// (mu1, sigma1, kappa1, S1, ..., mu5, sigma5, kappa5, S5); missing IMFs contribute zeros.
using EmdFeatures = std::array<double, kEmdFeatures>;

inline EmdFeatures emd_feature_vector(const ImfSet& set) {
  EmdFeatures f{};
  for (std::size_t k = 0; k < std::min(kImfsUsed, set.imfs.size()); ++k) {
    const auto st = imf_stats(set.imfs[k]);
    f[4 * k + 0] = st.mu;
    f[4 * k + 1] = st.sigma;
    f[4 * k + 2] = st.kappa;
    f[4 * k + 3] = st.s;
  }
  return f;
}

/// Windowed signal -> sift with 5 IMFs -> 20 raw features.
inline EmdFeatures extract_emd_features(std::span<const double> windowed, SiftConfig cfg = {}) {
  cfg.n_imf_max = static_cast<int>(kImfsUsed);
  return emd_feature_vector(sift(windowed, cfg));
}

/// Per-column min-max map fitted on training rows. Constant columns map to 0.
class Normalizer {
 public:
  Normalizer() = default;
  Normalizer(std::vector<double> lo, std::vector<double> hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
    if (lo_.size() != hi_.size()) throw std::invalid_argument("normalizer bounds differ in length");
  }

  template <class Row>
  static Normalizer fit(std::span<const Row> rows) {
    if (rows.empty() || rows.front().size() == 0)
      throw std::invalid_argument("cannot fit a normalizer on an empty matrix");
    const std::size_t p = rows.front().size();
    std::vector<double> lo(rows.front().begin(), rows.front().end());
    std::vector<double> hi = lo;
    for (const auto& r : rows) {
      if (r.size() != p) throw std::invalid_argument("ragged training matrix");
      for (std::size_t j = 0; j < p; ++j) {
        lo[j] = std::min(lo[j], r[j]);
        hi[j] = std::max(hi[j], r[j]);
      }
    }
    return Normalizer(std::move(lo), std::move(hi));
  }

  std::size_t dim() const noexcept { return lo_.size(); }
  const std::vector<double>& lower() const noexcept { return lo_; }
  const std::vector<double>& upper() const noexcept { return hi_; }

  double apply(std::size_t j, double x) const {
    const double range = hi_[j] - lo_[j];
    return range > 0.0 ? (x - lo_[j]) / range : 0.0;
  }

  template <class Row>
  Row apply(const Row& row) const {
    if (row.size() != dim()) throw std::invalid_argument("row length does not match normalizer");
    Row out = row;
    for (std::size_t j = 0; j < dim(); ++j) out[j] = apply(j, row[j]);
    return out;
  }

 private:
  std::vector<double> lo_, hi_;
};

}  // namespace emdscan
