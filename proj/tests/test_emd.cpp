#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "emdscan/emd.hpp"

using namespace emdscan;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> tone(std::size_t n, double cycles, double amp = 1.0, double offset = 0.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = offset + amp * std::sin(2 * kPi * cycles * double(i) / double(n));
  return x;
}

double interior_rel_err(const std::vector<double>& got, const std::vector<double>& want) {
  const std::size_t n = want.size(), lo = n / 10, hi = n - n / 10;
  double e = 0, w = 0;
  for (std::size_t i = lo; i < hi; ++i) {
    e += (got[i] - want[i]) * (got[i] - want[i]);
    w += want[i] * want[i];
  }
  return std::sqrt(e / w);
}

double norm2(const std::vector<double>& x) {
  double s = 0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

}  // namespace

TEST(Extrema, Examples) {
  auto e = find_extrema(std::vector<double>{0, 1, 0, -1, 0});
  EXPECT_EQ(e.maxima, std::vector<std::size_t>{1});
  EXPECT_EQ(e.minima, std::vector<std::size_t>{3});

  e = find_extrema(std::vector<double>{0, 1, 2, 3});
  EXPECT_EQ(e.count(), 0u);

  e = find_extrema(std::vector<double>{0, 1, 1, 0});
  EXPECT_EQ(e.maxima, std::vector<std::size_t>{1});
  EXPECT_TRUE(e.minima.empty());
}

TEST(Extrema, PlateauMidpointAndShoulders) {
  auto e = find_extrema(std::vector<double>{0, 2, 2, 2, 0});
  EXPECT_EQ(e.maxima, std::vector<std::size_t>{2});
  // A step is not an extremum.
  e = find_extrema(std::vector<double>{0, 1, 1, 2});
  EXPECT_EQ(e.count(), 0u);
  // Run touching the edge is not counted.
  e = find_extrema(std::vector<double>{0, 1, 1});
  EXPECT_EQ(e.count(), 0u);
}

TEST(C1, Examples) {
  auto c = count_c1(std::vector<double>{1, -1, 1, -1});
  EXPECT_EQ(c.n_extrema, 2u);
  EXPECT_EQ(c.n_zero_crossings, 3u);
  EXPECT_TRUE(c.passes);

  EXPECT_TRUE(count_c1(tone(400, 2)).passes);

  c = count_c1(std::vector<double>{1, 2, 1, 2, 1});
  EXPECT_EQ(c.n_extrema, 3u);
  EXPECT_EQ(c.n_zero_crossings, 0u);
  EXPECT_FALSE(c.passes);
}

TEST(Envelopes, OffsetSineMeanIsOffset) {
  const auto x = tone(1000, 10, 1.0, 0.5);
  const auto env = envelopes(x, find_extrema(x));
  const std::size_t lo = 100, hi = 900;
  double worst = 0;
  for (std::size_t i = lo; i < hi; ++i) worst = std::max(worst, std::abs(0.5 * (env.upper[i] + env.lower[i]) - 0.5));
  EXPECT_LT(worst, 0.05);
}

TEST(Envelopes, TriangleMeanNearZero) {
  std::vector<double> x(400);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double ph = std::fmod(double(i) + 10.0, 40.0) / 40.0;
    x[i] = ph < 0.5 ? 4 * ph - 1 : 3 - 4 * ph;
  }
  const auto env = envelopes(x, find_extrema(x));
  for (std::size_t i = 40; i < 360; ++i) EXPECT_NEAR(0.5 * (env.upper[i] + env.lower[i]), 0.0, 0.05);
}

TEST(Envelopes, SingleMaximumThrows) {
  std::vector<double> x{0, 1, 2, 1, 0};
  EXPECT_THROW(envelopes(x, find_extrema(x)), InsufficientExtrema);
}

TEST(Sift, SingleSinusoid) {
  const auto x = tone(512, 8);
  const auto set = sift(x);
  ASSERT_GE(set.imfs.size(), 1u);
  const auto& d = set.imfs[0];
  double dot = 0;
  for (std::size_t i = 0; i < x.size(); ++i) dot += d[i] * x[i];
  EXPECT_GT(dot / (norm2(d) * norm2(x)), 0.99);
  EXPECT_LT(norm2(set.residue), 0.05 * norm2(x));
}

TEST(Sift, ConstantHasNoImfs) {
  std::vector<double> x(64, 3.25);
  const auto set = sift(x);
  EXPECT_TRUE(set.imfs.empty());
  EXPECT_EQ(set.residue, x);
}

TEST(Sift, TwoTonesSeparate) {
  const auto hi = tone(1024, 32), lo = tone(1024, 4);
  std::vector<double> x(1024);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = hi[i] + lo[i];
  const auto set = sift(x);
  ASSERT_GE(set.imfs.size(), 2u);
  EXPECT_LT(interior_rel_err(set.imfs[0], hi), 0.2);
  EXPECT_LT(interior_rel_err(set.imfs[1], lo), 0.2);
}

TEST(Sift, ReconstructsAndImfsPassC1) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(300);
    for (auto& v : x) v = g(rng);
    const auto set = sift(x);
    const auto r = set.reconstruct();
    double err = 0;
    for (std::size_t i = 0; i < x.size(); ++i) err = std::max(err, std::abs(r[i] - x[i]));
    EXPECT_LT(err, 1e-9 * norm2(x));
    EXPECT_LE(set.imfs.size(), 5u);
    for (std::size_t k = 0; k < set.imfs.size(); ++k)
      if (!set.not_converged[k]) {
        EXPECT_TRUE(count_c1(set.imfs[k]).passes);
      }
  }
}

TEST(Sift, IterationCapFlagsInsteadOfThrowing) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  std::vector<double> x(256);
  for (auto& v : x) v = g(rng);
  SiftConfig cfg;
  cfg.max_sift_iters = 1;
  cfg.c2_tol = 1e-12;
  const auto set = sift(x, cfg);
  ASSERT_FALSE(set.imfs.empty());
  EXPECT_TRUE(set.warned());
}

TEST(Sift, Deterministic) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  std::vector<double> x(500);
  for (auto& v : x) v = g(rng);
  const auto a = sift(x), b = sift(x);
  EXPECT_EQ(a.imfs, b.imfs);
  EXPECT_EQ(a.residue, b.residue);
}

TEST(Sift, RejectsShortOrNonFinite) {
  EXPECT_THROW(sift(std::vector<double>(4, 1.0)), std::invalid_argument);
  std::vector<double> x(16, 0.0);
  x[3] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(sift(x), std::invalid_argument);
  SiftConfig bad;
  bad.n_imf_max = 0;
  EXPECT_THROW(sift(tone(64, 2), bad), std::invalid_argument);
}
