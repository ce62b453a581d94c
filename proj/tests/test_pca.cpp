#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "emdscan/pca.hpp"
#include "oracles.hpp"

using namespace emdscan;

using oracle::random_matrix;

TEST(Pca, MatchesScatterEigenOracle) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto X = random_matrix(6, 8, seed);
    const auto m = pca_fit(X);
    ASSERT_EQ(m.retained(), 5u);
    const auto O = oracle::pca_components(X, 5);
    EXPECT_LT((m.components - O).cwiseAbs().maxCoeff(), 1e-8) << seed;

    const Eigen::VectorXd x = random_matrix(8, 1, seed + 100);
    const Eigen::VectorXd raw = pca_raw_scores(m, std::span<const double>(x.data(), 8));
    const Eigen::VectorXd want = O * (x - X.colwise().mean().transpose());
    EXPECT_LT((raw - want).cwiseAbs().maxCoeff(), 1e-8);

    const Eigen::VectorXd pc1 = (X.rowwise() - X.colwise().mean()) * O.row(0).transpose();
    const double lo = pc1.minCoeff(), hi = pc1.maxCoeff();
    const auto s = pca_scores(m, std::span<const double>(x.data(), 8));
    EXPECT_NEAR(s[0], (want(0) - lo) / (hi - lo), 1e-8);
    for (int j = 1; j < 5; ++j) EXPECT_NEAR(s[j], want(j) / (hi - lo), 1e-8);
    for (int j = 5; j < 30; ++j) EXPECT_EQ(s[j], 0.0);
  }
}

TEST(Pca, ComponentsOrthonormalAndVarianceSorted) {
  const auto X = random_matrix(40, 60, 2);
  const auto m = pca_fit(X);
  ASSERT_EQ(m.retained(), 30u);
  const Eigen::MatrixXd G = m.components * m.components.transpose();
  EXPECT_LT((G - Eigen::MatrixXd::Identity(30, 30)).cwiseAbs().maxCoeff(), 1e-8);
  for (Eigen::Index i = 1; i < m.explained.size(); ++i) EXPECT_LE(m.explained(i), m.explained(i - 1));
}

TEST(Pca, RankOne) {
  const Eigen::RowVectorXd base = random_matrix(1, 12, 3);
  const Eigen::RowVectorXd mean = random_matrix(1, 12, 4);
  Eigen::MatrixXd X(7, 12);
  for (int r = 0; r < 7; ++r) X.row(r) = mean + (r - 3.0) * 0.7 * base;
  const auto m = pca_fit(X);
  ASSERT_GE(m.retained(), 1u);
  EXPECT_NEAR(m.explained(0) / m.explained.sum(), 1.0, 1e-8);
  for (int r = 0; r < 7; ++r) {
    const Eigen::VectorXd row = X.row(r).transpose();
    const auto raw = pca_raw_scores(m, std::span<const double>(row.data(), 12));
    for (Eigen::Index j = 1; j < raw.size(); ++j) EXPECT_NEAR(raw(j), 0.0, 1e-8);
  }
}

TEST(Pca, NormalizedScoreExamples) {
  const auto X = random_matrix(9, 5, 8);
  const auto m = pca_fit(X);
  const Eigen::MatrixXd C = X.rowwise() - m.mean.transpose();
  Eigen::Index best = 0;
  (C * m.components.row(0).transpose()).maxCoeff(&best);
  const Eigen::VectorXd top = X.row(best).transpose();
  EXPECT_NEAR(pca_scores(m, std::span<const double>(top.data(), 5))[0], 1.0, 1e-12);

  const auto s = pca_scores(m, std::span<const double>(m.mean.data(), 5));
  EXPECT_NEAR(s[0], -m.min1 / (m.max1 - m.min1), 1e-12);
  for (int j = 1; j < 30; ++j) EXPECT_NEAR(s[j], 0.0, 1e-12);

  std::vector<double> wrong(4, 0.0);
  EXPECT_THROW(pca_scores(m, wrong), std::invalid_argument);
}

TEST(Pca, IdenticalRowsGiveZeroScores) {
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(5, 4);
  const auto m = pca_fit(X);
  EXPECT_EQ(m.retained(), 0u);
  std::vector<double> x{1, 2, 3, 4};
  for (double v : pca_scores(m, x)) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(pca_fit(Eigen::MatrixXd::Ones(1, 4)), std::invalid_argument);
}

TEST(Pca, BinaryRoundTrip) {
  const auto m = pca_fit(random_matrix(10, 7, 5));
  std::stringstream buf;
  save_pca(m, buf);
  EXPECT_EQ(load_pca(buf), m);
  std::stringstream junk("not a model");
  EXPECT_ANY_THROW(load_pca(junk));
}
