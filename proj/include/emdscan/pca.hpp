#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <vector>

namespace emdscan {

inline constexpr std::size_t kPcaScores = 30;

using PcaScores = std::array<double, kPcaScores>;

/// Principal directions of one antenna pair's training signals.
struct PcaModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;  // k x T, orthonormal rows, k <= 30
  Eigen::VectorXd explained;   // variance per retained component, non-increasing
  double min1 = 0.0;           // range of training PC-1 scores
  double max1 = 0.0;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(mean.size()); }
  std::size_t retained() const noexcept { return static_cast<std::size_t>(components.rows()); }

  bool operator==(const PcaModel& o) const {
    return mean == o.mean && components == o.components && explained == o.explained && min1 == o.min1 && max1 == o.max1;
  }
};

/// Fits on an n x T matrix (one windowed signal per row) via SVD of the centred data.
/// Each component is signed so that its largest-magnitude entry is positive.
inline PcaModel pca_fit(const Eigen::MatrixXd& X) {
  if (X.rows() < 2) throw std::invalid_argument("pca_fit needs at least 2 rows");
  if (X.cols() < 1) throw std::invalid_argument("pca_fit needs at least 1 column");
  PcaModel m;
  m.mean = X.colwise().mean().transpose();
  const Eigen::MatrixXd C = X.rowwise() - m.mean.transpose();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(C, Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const auto limit = std::min<Eigen::Index>({static_cast<Eigen::Index>(kPcaScores), X.rows() - 1, X.cols()});
  const double cutoff = sv.size() > 0 ? sv(0) * 1e-10 : 0.0;
  Eigen::Index k = 0;
  while (k < limit && sv(k) > cutoff && sv(k) > 0.0) ++k;

  m.components.resize(k, X.cols());
  m.explained.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    Eigen::VectorXd v = svd.matrixV().col(i);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    m.components.row(i) = v.transpose();
    m.explained(i) = sv(i) * sv(i) / static_cast<double>(X.rows() - 1);
  }
  if (k > 0) {
    const Eigen::VectorXd pc1 = C * m.components.row(0).transpose();
    m.min1 = pc1.minCoeff();
    m.max1 = pc1.maxCoeff();
  }
  return m;
}

inline Eigen::VectorXd pca_raw_scores(const PcaModel& m, std::span<const double> x) {
  if (x.size() != m.dim()) throw std::invalid_argument("pca_scores: signal length does not match the model");
  const Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
  return m.components * (v - m.mean);
}

/// PC-1 is min-max scaled to the training range; the other scores are divided by the same range.
inline PcaScores pca_scores(const PcaModel& m, std::span<const double> x) {
  const Eigen::VectorXd raw = pca_raw_scores(m, x);
  PcaScores out{};
  const double range = m.max1 - m.min1;
  if (!(range > 0.0)) return out;
  for (Eigen::Index i = 0; i < raw.size(); ++i)
    out[static_cast<std::size_t>(i)] = i == 0 ? (raw(0) - m.min1) / range : raw(i) / range;
  return out;
}

namespace detail {

inline constexpr char kPcaMagic[8] = {'E', 'M', 'D', 'P', 'C', 'A', '1', '\0'};

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("truncated PCA model file");
  return v;
}

}  // namespace detail

/// Native-endian binary: magic, u64 T, u64 k, mean[T], components[k*T] row-major, explained[k], min1, max1.
inline void save_pca(const PcaModel& m, std::ostream& out) {
  out.write(detail::kPcaMagic, sizeof(detail::kPcaMagic));
  detail::put<std::uint64_t>(out, m.dim());
  detail::put<std::uint64_t>(out, m.retained());
  for (Eigen::Index i = 0; i < m.mean.size(); ++i) detail::put(out, m.mean(i));
  for (Eigen::Index r = 0; r < m.components.rows(); ++r)
    for (Eigen::Index c = 0; c < m.components.cols(); ++c) detail::put(out, m.components(r, c));
  for (Eigen::Index i = 0; i < m.explained.size(); ++i) detail::put(out, m.explained(i));
  detail::put(out, m.min1);
  detail::put(out, m.max1);
}

inline PcaModel load_pca(std::istream& in) {
  char magic[sizeof(detail::kPcaMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, detail::kPcaMagic, sizeof(magic)) != 0)
    throw std::runtime_error("not a PCA model file");
  const auto t = static_cast<Eigen::Index>(detail::get<std::uint64_t>(in));
  const auto k = static_cast<Eigen::Index>(detail::get<std::uint64_t>(in));
  if (k > static_cast<Eigen::Index>(kPcaScores)) throw std::runtime_error("PCA model has too many components");
  PcaModel m;
  m.mean.resize(t);
  m.components.resize(k, t);
  m.explained.resize(k);
  for (Eigen::Index i = 0; i < t; ++i) m.mean(i) = detail::get<double>(in);
  for (Eigen::Index r = 0; r < k; ++r)
    for (Eigen::Index c = 0; c < t; ++c) m.components(r, c) = detail::get<double>(in);
  for (Eigen::Index i = 0; i < k; ++i) m.explained(i) = detail::get<double>(in);
  m.min1 = detail::get<double>(in);
  m.max1 = detail::get<double>(in);
  return m;
}

}  // namespace emdscan
