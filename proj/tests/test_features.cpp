#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "emdscan/features.hpp"

using namespace emdscan;

TEST(ImfStats, Examples) {
  auto st = imf_stats(std::vector<double>{1, -1, 1, -1});
  EXPECT_DOUBLE_EQ(st.mu, 1.0);
  EXPECT_DOUBLE_EQ(st.sigma, 1.0);
  EXPECT_DOUBLE_EQ(st.kappa, 1.0);
  EXPECT_DOUBLE_EQ(st.s, 2.0);

  st = imf_stats(std::vector<double>{2, 2, 2, 2});
  EXPECT_DOUBLE_EQ(st.mu, 2.0);
  EXPECT_DOUBLE_EQ(st.sigma, 0.0);
  EXPECT_DOUBLE_EQ(st.kappa, 0.0);
  EXPECT_DOUBLE_EQ(st.s, 0.0);

  // Hand values: mean 0, m2 = 0.5, m4 = 0.5, so kappa = 0.5 / 0.25.
  st = imf_stats(std::vector<double>{0, 1, 0, -1});
  EXPECT_DOUBLE_EQ(st.mu, 0.5);
  EXPECT_NEAR(st.sigma, std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(st.kappa, 2.0, 1e-12);
  EXPECT_DOUBLE_EQ(st.s, 1.0);

  EXPECT_THROW(imf_stats(std::vector<double>{1.0}), std::invalid_argument);
}

TEST(ImfStats, ScaleCovariance) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  std::vector<double> d(50), d3(50);
  for (std::size_t i = 0; i < d.size(); ++i) d3[i] = 3.0 * (d[i] = g(rng));
  const auto a = imf_stats(d), b = imf_stats(d3);
  EXPECT_NEAR(b.mu, 3 * a.mu, 1e-12);
  EXPECT_NEAR(b.sigma, 3 * a.sigma, 1e-12);
  EXPECT_NEAR(b.s, 3 * a.s, 1e-12);
  EXPECT_NEAR(b.kappa, a.kappa, 1e-12);
}

TEST(EmdFeatureVector, PaddingRules) {
  ImfSet set;
  for (int k = 0; k < 3; ++k) set.imfs.push_back({1.0 + k, -1.0, 1.0, -1.0 - k});
  const auto f = emd_feature_vector(set);
  for (std::size_t i = 0; i < 12; ++i) EXPECT_TRUE(std::isfinite(f[i]));
  EXPECT_GT(f[0], 0.0);
  for (std::size_t i = 12; i < 20; ++i) EXPECT_EQ(f[i], 0.0);

  for (int k = 3; k < 6; ++k) set.imfs.push_back({0.5, -0.5, 0.5, -0.5});
  const auto g = emd_feature_vector(set);
  for (double v : g) EXPECT_TRUE(std::isfinite(v));
  EXPECT_NE(g[16], 0.0);

  const auto c = extract_emd_features(std::vector<double>(64, 1.5));
  for (double v : c) EXPECT_EQ(v, 0.0);
}

TEST(EmdFeatureVector, NoisySignalFillsTwentySlots) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  std::vector<double> x(540);
  for (auto& v : x) v = g(rng);
  const auto f = extract_emd_features(x);
  for (double v : f) EXPECT_TRUE(std::isfinite(v));
  EXPECT_GT(f[0], 0.0);
}

TEST(Normalizer, Examples) {
  using Row = std::vector<double>;
  std::vector<Row> rows{{2, 3}, {4, 3}, {6, 3}};
  const auto n = Normalizer::fit<Row>(rows);
  EXPECT_EQ(n.apply(Row{2, 3}), (Row{0, 0}));
  EXPECT_EQ(n.apply(Row{4, 3}), (Row{0.5, 0}));
  EXPECT_EQ(n.apply(Row{6, 3}), (Row{1, 0}));
  EXPECT_DOUBLE_EQ(n.apply(0, 8.0), 1.5);
  EXPECT_THROW(n.apply(Row{1, 2, 3}), std::invalid_argument);
  EXPECT_THROW(Normalizer::fit<Row>(std::vector<Row>{}), std::invalid_argument);
  std::vector<Row> ragged{{1, 2}, {1}};
  EXPECT_THROW(Normalizer::fit<Row>(ragged), std::invalid_argument);
}
