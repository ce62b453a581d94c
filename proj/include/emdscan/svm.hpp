#pragma once

// Cost-sensitive 2nu-SVM with an RBF kernel.
//
// Dual solved here (beta = 2 * alpha of the usual "sum alpha >= 1" normalisation):
//
//   minimise    1/2 sum_ij beta_i beta_j y_i y_j K(x_i, x_j)
//   subject to  sum_{y_i = +1} beta_i = 1,   sum_{y_i = -1} beta_i = 1,
//               0 <= beta_i <= 1 / (n_+ nu_+)  for positives,
//               0 <= beta_i <= 1 / (n_- nu_-)  for negatives.
//
// Geometrically this is the distance between the reduced convex hulls of the two
// classes. nu_c upper-bounds the fraction of margin errors in class c and
// lower-bounds the fraction of support vectors in class c, so (nu_+, nu_-) trade
// false negatives against false positives. With per-class multipliers r_+ and r_-
// of the two equality constraints, the decision function is
//   f(x) = sum_i beta_i y_i K(x_i, x) + (r_- - r_+) / 2,  margin rho = (r_+ + r_-) / 2.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "emdscan/error.hpp"

namespace emdscan {

struct SvmParams {
  double nu_plus = 0.5;
  double nu_minus = 0.5;
  double gamma = 1.0;

  void validate() const {
    if (!(nu_plus > 0.0 && nu_plus <= 1.0)) throw std::invalid_argument("nu_plus must lie in (0, 1]");
    if (!(nu_minus > 0.0 && nu_minus <= 1.0)) throw std::invalid_argument("nu_minus must lie in (0, 1]");
    if (!(gamma > 0.0)) throw std::invalid_argument("RBF gamma must be positive");
  }

  bool operator==(const SvmParams&) const = default;
};

struct SolverOptions {
  double tolerance = 1e-8;  // stop when the maximal KKT violation drops below this
  int max_iterations = 100000;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// exp(-gamma * ||a - b||^2) for all row pairs.
inline Eigen::MatrixXd rbf_kernel(const RowMatrix& a, const RowMatrix& b, double gamma) {
  const Eigen::VectorXd na = a.rowwise().squaredNorm();
  const Eigen::VectorXd nb = b.rowwise().squaredNorm();
  Eigen::MatrixXd d = -2.0 * (a * b.transpose());
  d.colwise() += na;
  d.rowwise() += nb.transpose();
  return (-gamma * d.cwiseMax(0.0)).array().exp().matrix();
}

struct DualSolution {
  std::vector<double> beta;
  double r_plus = 0.0;
  double r_minus = 0.0;
  double kkt_violation = 0.0;
  int iterations = 0;
};

namespace detail {

inline double class_multiplier(const std::vector<double>& beta, const Eigen::VectorXd& grad,
                               const std::vector<double>& cap, std::span<const int> y, int cls) {
  double sum = 0.0;
  int free = 0;
  double at_upper = -std::numeric_limits<double>::infinity();  // r >= G there
  double at_lower = std::numeric_limits<double>::infinity();   // r <= G there
  for (std::size_t i = 0; i < beta.size(); ++i) {
    if (y[i] != cls) continue;
    const double g = grad(static_cast<Eigen::Index>(i));
    if (beta[i] >= cap[i]) {
      at_upper = std::max(at_upper, g);
    } else if (beta[i] <= 0.0) {
      at_lower = std::min(at_lower, g);
    } else {
      sum += g;
      ++free;
    }
  }
  if (free > 0) return sum / free;
  if (!std::isfinite(at_lower)) return at_upper;
  if (!std::isfinite(at_upper)) return at_lower;
  return 0.5 * (at_upper + at_lower);
}

}  // namespace detail

/// SMO on the dual above with second-order working-set selection inside each class.
/// `kernel` is the n x n Gram matrix, `y` holds +1/-1.
inline DualSolution solve_dual(const Eigen::MatrixXd& kernel, std::span<const int> y, const SvmParams& params,
                               const SolverOptions& opt = {}) {
  params.validate();
  const std::size_t n = y.size();
  if (kernel.rows() != static_cast<Eigen::Index>(n) || kernel.cols() != static_cast<Eigen::Index>(n))
    throw std::invalid_argument("kernel size does not match the labels");
  std::size_t n_pos = 0, n_neg = 0;
  for (int v : y) {
    if (v == 1)
      ++n_pos;
    else if (v == -1)
      ++n_neg;
    else
      throw std::invalid_argument("labels must be +1 or -1");
  }
  if (n_pos == 0 || n_neg == 0)
    throw TrainingError("2nu-SVM needs both classes (got " + std::to_string(n_pos) + " positive, " +
                        std::to_string(n_neg) + " negative)");

  const double cap_pos = 1.0 / (static_cast<double>(n_pos) * params.nu_plus);
  const double cap_neg = 1.0 / (static_cast<double>(n_neg) * params.nu_minus);
  std::vector<double> cap(n);
  for (std::size_t i = 0; i < n; ++i) cap[i] = y[i] == 1 ? cap_pos : cap_neg;

  DualSolution sol;
  sol.beta.assign(n, 0.0);
  double left_pos = 1.0, left_neg = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    double& left = y[i] == 1 ? left_pos : left_neg;
    sol.beta[i] = std::min(cap[i], left);
    left -= sol.beta[i];
  }

  // Signed Gram matrix Q_ij = y_i y_j K_ij.
  Eigen::VectorXd ys(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) ys(static_cast<Eigen::Index>(i)) = y[i];
  const Eigen::MatrixXd Q = ys.asDiagonal() * kernel * ys.asDiagonal();
  const Eigen::VectorXd beta0 = Eigen::Map<const Eigen::VectorXd>(sol.beta.data(), static_cast<Eigen::Index>(n));
  Eigen::VectorXd grad = Q * beta0;

  std::array<std::vector<std::size_t>, 2> members;
  for (std::size_t i = 0; i < n; ++i) members[y[i] == 1 ? 0 : 1].push_back(i);

  constexpr double kTau = 1e-12;
  auto& beta = sol.beta;
  const double* g = grad.data();
  for (sol.iterations = 0; sol.iterations < opt.max_iterations; ++sol.iterations) {
    double violation = 0.0;
    std::size_t best_i = n, best_j = n;
    double best_gain = 0.0;
    for (const auto& idx : members) {
      // i may grow (beta_i < cap), j may shrink (beta_j > 0); moving mass from j to i pays when G_i < G_j.
      std::size_t i = n;
      double g_min = std::numeric_limits<double>::infinity();
      double g_max = -std::numeric_limits<double>::infinity();
      for (auto t : idx) {
        if (beta[t] < cap[t] && g[t] < g_min) {
          g_min = g[t];
          i = t;
        }
        if (beta[t] > 0.0) g_max = std::max(g_max, g[t]);
      }
      if (i == n || !std::isfinite(g_max)) continue;
      violation = std::max(violation, g_max - g_min);
      const double qii = Q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
      const double* qi = Q.col(static_cast<Eigen::Index>(i)).data();
      for (auto t : idx) {
        if (t == i || !(beta[t] > 0.0)) continue;
        const double diff = g[t] - g_min;
        if (diff <= 0.0) continue;
        const double a =
            std::max(qii + Q(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(t)) - 2.0 * qi[t], kTau);
        const double gain = diff * diff / a;
        if (gain > best_gain) {
          best_gain = gain;
          best_i = i;
          best_j = t;
        }
      }
    }
    sol.kkt_violation = violation;
    if (violation <= opt.tolerance || best_i == n) break;

    const std::size_t i = best_i, j = best_j;
    const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
    const double a = std::max(Q(ii, ii) + Q(jj, jj) - 2.0 * Q(ii, jj), kTau);
    double delta = (g[j] - g[i]) / a;
    bool i_hits_cap = false, j_hits_zero = false;
    if (delta >= cap[i] - beta[i]) {
      delta = cap[i] - beta[i];
      i_hits_cap = true;
    }
    if (delta >= beta[j]) {
      delta = beta[j];
      j_hits_zero = true;
      i_hits_cap = delta >= cap[i] - beta[i];
    }
    beta[i] = i_hits_cap ? cap[i] : beta[i] + delta;
    beta[j] = j_hits_zero ? 0.0 : beta[j] - delta;
    grad += delta * (Q.col(ii) - Q.col(jj));
  }

  sol.r_plus = detail::class_multiplier(beta, grad, cap, y, 1);
  sol.r_minus = detail::class_multiplier(beta, grad, cap, y, -1);
  return sol;
}

/// A trained 2nu-SVM: support vectors with signed coefficients beta_i * y_i.
struct SvmModel {
  RowMatrix support;
  Eigen::VectorXd coef;
  double bias = 0.0;
  double rho = 0.0;
  SvmParams params;
  double kkt_violation = 0.0;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(support.cols()); }

  double decision(std::span<const double> x) const {
    if (x.size() != dim())
      throw std::invalid_argument("feature dimension " + std::to_string(x.size()) + " does not match model dimension " +
                                  std::to_string(dim()));
    double f = bias;
    for (Eigen::Index i = 0; i < support.rows(); ++i) {
      double d2 = 0.0;
      for (Eigen::Index k = 0; k < support.cols(); ++k) {
        const double diff = support(i, k) - x[static_cast<std::size_t>(k)];
        d2 += diff * diff;
      }
      f += coef(i) * std::exp(-params.gamma * d2);
    }
    return f;
  }

  /// Decision values for every row of `x`.
  Eigen::VectorXd decision(const RowMatrix& x) const {
    if (static_cast<std::size_t>(x.cols()) != dim())
      throw std::invalid_argument("feature dimension does not match the model");
    if (support.rows() == 0) return Eigen::VectorXd::Constant(x.rows(), bias);
    return (rbf_kernel(x, support, params.gamma) * coef).array() + bias;
  }

  /// +1 (tumour) when f(x) > 0, otherwise -1 (healthy).
  int predict(std::span<const double> x) const { return decision(x) > 0.0 ? 1 : -1; }

  bool operator==(const SvmModel&) const = default;
};

inline SvmModel model_from_dual(const RowMatrix& x, std::span<const int> y, const DualSolution& sol,
                                const SvmParams& params) {
  SvmModel m;
  m.params = params;
  m.kkt_violation = sol.kkt_violation;
  m.bias = 0.5 * (sol.r_minus - sol.r_plus);
  m.rho = 0.5 * (sol.r_plus + sol.r_minus);
  std::vector<Eigen::Index> sv;
  for (std::size_t i = 0; i < sol.beta.size(); ++i)
    if (sol.beta[i] > 0.0) sv.push_back(static_cast<Eigen::Index>(i));
  m.support.resize(static_cast<Eigen::Index>(sv.size()), x.cols());
  m.coef.resize(static_cast<Eigen::Index>(sv.size()));
  for (std::size_t k = 0; k < sv.size(); ++k) {
    m.support.row(static_cast<Eigen::Index>(k)) = x.row(sv[k]);
    m.coef(static_cast<Eigen::Index>(k)) =
        sol.beta[static_cast<std::size_t>(sv[k])] * y[static_cast<std::size_t>(sv[k])];
  }
  return m;
}

/// Trains with a precomputed Gram matrix of `x` (reuse it across nu settings).
inline SvmModel train_svm(const RowMatrix& x, std::span<const int> y, const Eigen::MatrixXd& kernel,
                          const SvmParams& params, const SolverOptions& opt = {}) {
  if (x.rows() < 2) throw TrainingError("2nu-SVM needs at least 2 training rows");
  if (!x.allFinite()) throw std::invalid_argument("training features must be finite");
  const auto sol = solve_dual(kernel, y, params, opt);
  return model_from_dual(x, y, sol, params);
}

inline SvmModel train_svm(const RowMatrix& x, std::span<const int> y, const SvmParams& params,
                          const SolverOptions& opt = {}) {
  params.validate();
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw std::invalid_argument("row count does not match labels");
  return train_svm(x, y, rbf_kernel(x, x, params.gamma), params, opt);
}

}  // namespace emdscan
