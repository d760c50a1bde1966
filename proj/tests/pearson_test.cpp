#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "permshift/correlation.hpp"
#include "permshift/dataset.hpp"

using namespace permshift;

namespace {

// Independent reference: textbook two-pass formula in extended precision.
// Kept deliberately different from the library implementation (long double
// everywhere, separate square roots, no clamping).
struct RefResult {
  long double r = 0.0L;
  bool degenerate = false;
};

RefResult ref_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  long double mx = 0.0L, my = 0.0L;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<long double>(n);
  my /= static_cast<long double>(n);
  long double sxx = 0.0L, syy = 0.0L, sxy = 0.0L;
  for (size_t i = 0; i < n; ++i) {
    const long double dx = static_cast<long double>(x[i]) - mx;
    const long double dy = static_cast<long double>(y[i]) - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0L || syy == 0.0L) return {0.0L, true};
  return {sxy / (std::sqrt(sxx) * std::sqrt(syy)), false};
}

std::vector<double> random_bits(std::mt19937_64& rng, size_t n, double p_one) {
  std::bernoulli_distribution bit(p_one);
  std::vector<double> v(n);
  for (auto& b : v) b = bit(rng) ? 1.0 : 0.0;
  return v;
}

}  // namespace

TEST(Pearson, MatchesReferenceOnRandomVectors) {
  std::mt19937_64 rng(20240517);
  std::uniform_int_distribution<size_t> len(3, 400);
  std::uniform_real_distribution<double> prob(0.05, 0.95);
  size_t compared = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const size_t n = len(rng);
    auto x = random_bits(rng, n, prob(rng));
    auto y = random_bits(rng, n, prob(rng));
    Correlation got = pearson_r(x, y);
    RefResult want = ref_pearson(x, y);
    ASSERT_EQ(got.degenerate, want.degenerate) << "trial " << trial;
    if (!want.degenerate) {
      EXPECT_NEAR(got.r, static_cast<double>(want.r), 1e-12) << "trial " << trial << " n=" << n;
      ++compared;
    }
  }
  EXPECT_GT(compared, 1000u);  // most draws should be non-degenerate
}

TEST(Pearson, SelfCorrelationIsExactlyOne) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    auto x = random_bits(rng, 50 + static_cast<size_t>(trial), 0.3);
    Correlation c = pearson_r(x, x);
    if (c.degenerate) continue;  // constant vector
    EXPECT_EQ(c.r, 1.0) << "must be exact, trial " << trial;
  }
  // And the mirrored case: x against its complement is exactly -1.
  std::vector<double> x{0, 1, 1, 0, 1, 0, 0, 1, 1, 1};
  std::vector<double> nx(x.size());
  for (size_t i = 0; i < x.size(); ++i) nx[i] = 1.0 - x[i];
  EXPECT_EQ(pearson_r(x, nx).r, -1.0);
}

TEST(Pearson, HandComputedExamples) {
  const std::vector<double> a{1, 1, 0, 0};
  // sxy = 0 -> r = 0.
  EXPECT_EQ(pearson_r(a, std::vector<double>{1, 0, 1, 0}).r, 0.0);
  // x = (1,1,0,0), y = (1,1,1,0): sxy = 0.5, sxx = 1, syy = 0.75
  // r = 0.5 / sqrt(0.75) = 1/sqrt(3).
  EXPECT_NEAR(pearson_r(a, std::vector<double>{1, 1, 1, 0}).r, 1.0 / std::sqrt(3.0), 1e-15);
}

TEST(Pearson, DegenerateAndErrors) {
  const std::vector<double> flat{1, 1, 1};
  const std::vector<double> var{0, 1, 0};
  EXPECT_TRUE(pearson_r(flat, var).degenerate);
  EXPECT_TRUE(pearson_r(var, std::vector<double>{0, 0, 0}).degenerate);
  EXPECT_EQ(pearson_r(flat, var).r, 0.0);
  try {
    pearson_r(std::vector<double>{1, 0}, std::vector<double>{1, 0, 1});
    FAIL() << "expected LengthMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::length_mismatch);
  }
  try {
    pearson_r(std::vector<double>{1}, std::vector<double>{0});
    FAIL() << "expected TooFewSamples";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::too_few_samples);
  }
}

TEST(Pearson, SymmetryAndRange) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    auto x = random_bits(rng, 40, 0.5);
    auto y = random_bits(rng, 40, 0.2);
    Correlation a = pearson_r(x, y);
    Correlation b = pearson_r(y, x);
    EXPECT_EQ(a.degenerate, b.degenerate);
    EXPECT_EQ(a.r, b.r);  // bitwise symmetric
    EXPECT_GE(a.r, -1.0);
    EXPECT_LE(a.r, 1.0);
  }
}

// ---------------------------------------------------------------------------
// rank_features
// ---------------------------------------------------------------------------

namespace {
BinaryDataset ranking_fixture() {
  // 8 rows, label = first half 0 / second half 1.
  // perfect: equals label (|r| = 1)
  // anti: complement of label (|r| = 1; tie with perfect -> name order)
  // weak: agrees 6/8
  // flat: constant (treated as r = 0)
  // noise: exactly uncorrelated pattern
  std::vector<std::string> names{"weak", "perfect", "flat", "anti", "noise"};
  std::vector<uint8_t> labels{0, 0, 0, 0, 1, 1, 1, 1};
  std::vector<uint8_t> perfect{0, 0, 0, 0, 1, 1, 1, 1};
  std::vector<uint8_t> anti{1, 1, 1, 1, 0, 0, 0, 0};
  std::vector<uint8_t> weak{0, 0, 0, 1, 1, 1, 1, 0};
  std::vector<uint8_t> flat(8, 1);
  std::vector<uint8_t> noise{0, 1, 0, 1, 0, 1, 0, 1};
  std::vector<uint8_t> cells;
  for (size_t i = 0; i < 8; ++i) {
    cells.push_back(weak[i]);
    cells.push_back(perfect[i]);
    cells.push_back(flat[i]);
    cells.push_back(anti[i]);
    cells.push_back(noise[i]);
  }
  return BinaryDataset(FeatureCatalog(std::move(names)), std::move(cells), std::move(labels));
}
}  // namespace

TEST(RankFeatures, OrdersByAbsRThenName) {
  BinaryDataset d = ranking_fixture();
  CorrelationRanking ranking = rank_features(d);
  ASSERT_EQ(ranking.entries.size(), 5u);
  EXPECT_EQ(ranking.n_samples, 8u);
  // |r|=1 pair first, tie broken by name: "anti" < "perfect".
  EXPECT_EQ(ranking.entries[0].name, "anti");
  EXPECT_EQ(ranking.entries[1].name, "perfect");
  EXPECT_EQ(ranking.entries[0].r, -1.0);
  EXPECT_EQ(ranking.entries[1].r, 1.0);
  EXPECT_EQ(ranking.entries[0].abs_r, 1.0);
  EXPECT_EQ(ranking.entries[2].name, "weak");
  EXPECT_NEAR(ranking.entries[2].abs_r, 0.5, 1e-15);
  // constant and zero-r features sink to the bottom, name order among equals.
  EXPECT_EQ(ranking.entries[3].name, "flat");
  EXPECT_EQ(ranking.entries[3].r, 0.0);
  EXPECT_EQ(ranking.entries[4].name, "noise");
  EXPECT_EQ(ranking.entries[4].r, 0.0);
}

TEST(RankFeatures, SingleClassThrows) {
  BinaryDataset d(FeatureCatalog({"f"}), {0, 1, 0}, {1, 1, 1});
  try {
    rank_features(d);
    FAIL() << "expected SingleClassDataset";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::single_class_dataset);
  }
}

TEST(RankFeatures, DeterministicAcrossThreadCounts) {
  BinaryDataset d = ranking_fixture();
  set_max_threads(1);
  CorrelationRanking one = rank_features(d);
  set_max_threads(4);
  CorrelationRanking four = rank_features(d);
  set_max_threads(0);
  ASSERT_EQ(one.entries.size(), four.entries.size());
  for (size_t i = 0; i < one.entries.size(); ++i) {
    EXPECT_EQ(one.entries[i].name, four.entries[i].name);
    EXPECT_EQ(one.entries[i].r, four.entries[i].r);
  }
}
