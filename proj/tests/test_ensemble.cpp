#include <gtest/gtest.h>

#include <random>

#include "emdscan/ensemble.hpp"

using namespace emdscan;

namespace {

LibraryEntry entry(double pf, double pm, AntennaPairId pair = {1, 2}, double nu_p = 0.5, double nu_m = 0.5) {
  LibraryEntry e;
  e.spec = {pair, {nu_p, nu_m, 1.0}, FeatureMode::combined()};
  e.model = std::make_shared<const SvmModel>();
  e.pf = pf;
  e.pm = pm;
  return e;
}

std::vector<PairTrainingData> random_pairs(int count, int rows, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<PairTrainingData> out;
  for (int k = 0; k < count; ++k) {
    PairTrainingData d{AntennaPairId::from_index(k), RowMatrix(rows, kCombinedFeatures)};
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < static_cast<int>(kCombinedFeatures); ++c) d.features(r, c) = u(rng);
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace

TEST(NpMeasure, Examples) {
  EXPECT_NEAR(np_measure(0.05, 0.2, 0.1), 0.2, 1e-12);
  EXPECT_NEAR(np_measure(0.2, 0.3, 0.1), 1.3, 1e-12);
  for (double a : {0.05, 0.3, 0.9}) EXPECT_NEAR(np_measure(a, 0.42, a), 0.42, 1e-12);
  EXPECT_THROW(np_measure(0.1, 0.1, 0.0), std::invalid_argument);
  EXPECT_THROW(np_measure(1.5, 0.1, 0.1), std::invalid_argument);
}

TEST(FeatureModeTest, SlicesAndNames) {
  EXPECT_EQ(FeatureMode::emd().width(), 20u);
  EXPECT_EQ(FeatureMode::pca().first_column(), 20u);
  EXPECT_EQ(FeatureMode::combined().width(), 50u);
  EXPECT_EQ(FeatureMode::scalar(7).first_column(), 6u);
  for (const auto& m : {FeatureMode::emd(), FeatureMode::pca(), FeatureMode::combined(), FeatureMode::scalar(20)})
    EXPECT_EQ(FeatureMode::parse(m.name()), m);
  EXPECT_THROW(FeatureMode::scalar(21), std::invalid_argument);
  EXPECT_THROW(FeatureMode::parse("wavelet"), std::invalid_argument);
}

TEST(Library, SizesFollowGrid) {
  const auto pairs = random_pairs(20, 6, 1);
  const std::vector<int> y{1, -1, -1, 1, -1, -1};
  const auto full = build_library(pairs, y, NuGrid::full(), FeatureMode::emd());
  EXPECT_EQ(NuGrid::full().size(), 324u);
  EXPECT_EQ(full.entries.size(), 6480u);
  const std::vector<double> desk{0.001, 0.03, 0.1, 0.3, 0.6, 1.0};
  const auto small = build_pair_library(pairs[0], y, {desk, desk, 1.0}, FeatureMode::pca());
  EXPECT_EQ(small.size(), 36u);
  for (const auto& e : small) EXPECT_TRUE(e.available());
  EXPECT_THROW(build_library(std::vector<PairTrainingData>{}, y, NuGrid::full(), FeatureMode::emd()), ConfigError);
}

TEST(Library, DegenerateFoldIsUnavailableNotFatal) {
  const auto pairs = random_pairs(2, 5, 2);
  const std::vector<int> y(5, -1);
  const auto lib = build_library(pairs, y, {{0.5}, {0.5}, 1.0}, FeatureMode::combined());
  for (const auto& e : lib.entries) {
    EXPECT_FALSE(e.available());
    EXPECT_TRUE(std::isinf(e.e_hat(0.1)));
  }
  EXPECT_THROW(select(lib, 0.1), SelectionError);
}

TEST(Library, CrossValidatedRatesAreRates) {
  const auto pairs = random_pairs(1, 20, 3);
  std::vector<int> y(20), groups(20);
  for (int i = 0; i < 20; ++i) {
    y[i] = i % 4 == 0 ? 1 : -1;
    groups[i] = i / 4;
  }
  LibraryOptions opt;
  opt.cv_folds = 5;
  for (bool grouped : {false, true}) {
    opt.groups = grouped ? groups : std::vector<int>{};
    const auto lib = build_pair_library(pairs[0], y, {{0.3, 0.9}, {0.3, 0.9}, 1.0}, FeatureMode::emd(), opt);
    for (const auto& e : lib) {
      EXPECT_GE(e.pf, 0.0);
      EXPECT_LE(e.pf, 1.0);
      EXPECT_GE(e.pm, 0.0);
      EXPECT_LE(e.pm, 1.0);
    }
  }
}

TEST(Select, TopKByMeasure) {
  Library lib;
  lib.entries = {entry(0.0, 0.1), entry(0.0, 0.5), entry(0.0, 0.3)};
  const auto idx = select_indices(lib.entries, 0.5, 2);
  EXPECT_EQ(idx, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(select_indices(lib.entries, 0.5, 10).size(), 3u);

  lib.entries.push_back(LibraryEntry{});  // unavailable
  const auto ens = select(lib, 0.5, 10);
  EXPECT_EQ(ens.members.size(), 3u);
  EXPECT_DOUBLE_EQ(ens.members.front().e_hat, 0.1);
  EXPECT_DOUBLE_EQ(ens.members.back().e_hat, 0.5);
}

TEST(Select, DeterministicTieBreak) {
  // All four have e = 0.2 at alpha 0.5; order falls to pf, then pair, then nu+, nu-.
  std::vector<LibraryEntry> lib = {entry(0.3, 0.2, {2, 1}), entry(0.1, 0.2, {3, 1}), entry(0.1, 0.2, {1, 2}, 0.6),
                                   entry(0.1, 0.2, {1, 2}, 0.4)};
  EXPECT_EQ(select_indices(lib, 0.5, 4), (std::vector<std::size_t>{3, 2, 1, 0}));
  std::reverse(lib.begin(), lib.end());
  EXPECT_EQ(select_indices(lib, 0.5, 4), (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(Votes, Examples) {
  std::vector<double> all(7, 0.3);
  auto v = combine_votes(all, VoteRule::Hard);
  EXPECT_EQ(v.label, Label::Tumour);
  EXPECT_DOUBLE_EQ(v.score, 1.0);

  v = combine_votes(std::vector<double>{1, -1, 2, -2}, VoteRule::Hard);
  EXPECT_EQ(v.score, 0.0);
  EXPECT_EQ(v.label, Label::Healthy);

  std::vector<double> sixty(100, -1.0);
  std::fill(sixty.begin(), sixty.begin() + 60, 1.0);
  v = combine_votes(sixty, VoteRule::Hard);
  EXPECT_NEAR(v.score, 0.2, 1e-15);
  EXPECT_EQ(v.label, Label::Tumour);

  // A zero decision counts as a healthy vote.
  EXPECT_EQ(combine_votes(std::vector<double>{0.0}, VoteRule::Hard).label, Label::Healthy);
  EXPECT_NEAR(combine_votes(std::vector<double>{0.5, -0.1}, VoteRule::Score).score, 0.2, 1e-15);
  EXPECT_THROW(combine_votes(std::vector<double>{}, VoteRule::Hard), std::invalid_argument);
}

TEST(Classify, MissingPairsAreListed) {
  auto data = random_pairs(2, 6, 4);
  const std::vector<int> y{1, -1, 1, -1, -1, -1};
  const auto lib = build_library(data, y, {{0.5}, {0.5}, 1.0}, FeatureMode::emd());
  const auto ens = select(lib, 0.3, 2);
  std::map<AntennaPairId, std::vector<double>> f;
  try {
    classify(ens, f);
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find(data[0].pair.str()), std::string::npos);
    EXPECT_NE(std::string(e.what()).find(data[1].pair.str()), std::string::npos);
  }
  for (const auto& d : data) f[d.pair] = std::vector<double>(d.features.row(0).begin(), d.features.row(0).end());
  EXPECT_NO_THROW(classify(ens, f));
}
