#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "permshift/learners.hpp"
#include "permshift/shap.hpp"

using namespace permshift;

namespace {

// ---------------------------------------------------------------------------
// Independent oracle: average marginal contribution over every permutation.
// Shares nothing with the library beyond model.margin().
// ---------------------------------------------------------------------------

double ref_coalition(const TreeEnsembleModel& model, std::span<const uint8_t> x,
                     const BinaryDataset& bg, const std::vector<bool>& pinned) {
  std::vector<uint8_t> composite(x.size());
  double total = 0.0;
  for (size_t r = 0; r < bg.rows(); ++r) {
    auto z = bg.row(r);
    for (size_t f = 0; f < x.size(); ++f) composite[f] = pinned[f] ? x[f] : z[f];
    total += model.margin(composite);
  }
  return total / static_cast<double>(bg.rows());
}

std::vector<double> permutation_shap(const TreeEnsembleModel& model, std::span<const uint8_t> x,
                                     const BinaryDataset& bg) {
  const size_t F = x.size();
  std::vector<size_t> perm(F);
  std::iota(perm.begin(), perm.end(), size_t{0});
  std::vector<long double> acc(F, 0.0L);
  uint64_t n_perms = 0;
  do {
    std::vector<bool> pinned(F, false);
    double prev = ref_coalition(model, x, bg, pinned);
    for (size_t f : perm) {
      pinned[f] = true;
      const double cur = ref_coalition(model, x, bg, pinned);
      acc[f] += static_cast<long double>(cur - prev);
      prev = cur;
    }
    ++n_perms;
  } while (std::next_permutation(perm.begin(), perm.end()));
  std::vector<double> phi(F);
  for (size_t f = 0; f < F; ++f) {
    phi[f] = static_cast<double>(acc[f] / static_cast<long double>(n_perms));
  }
  return phi;
}

// ---------------------------------------------------------------------------
// Hand-built fixtures
// ---------------------------------------------------------------------------

TreeEnsembleModel stump_model() {
  TreeEnsembleModel m;
  m.kind = LearnerKind::random_forest;
  m.catalog = FeatureCatalog({"f0"});
  Tree t;
  t.nodes.push_back({0, 1, 2, 0.0});
  t.nodes.push_back({-1, -1, -1, 0.2});
  t.nodes.push_back({-1, -1, -1, 0.8});
  m.trees.push_back(t);
  return m;
}

TreeEnsembleModel xor_model() {
  TreeEnsembleModel m;
  m.kind = LearnerKind::random_forest;
  m.catalog = FeatureCatalog({"x1", "x2"});
  Tree t;
  t.nodes.push_back({0, 1, 4, 0.0});   // 0: split x1
  t.nodes.push_back({1, 2, 3, 0.0});   // 1: x1=0, split x2
  t.nodes.push_back({-1, -1, -1, 0.0});  // 2: (0,0) -> 0
  t.nodes.push_back({-1, -1, -1, 1.0});  // 3: (0,1) -> 1
  t.nodes.push_back({1, 5, 6, 0.0});   // 4: x1=1, split x2
  t.nodes.push_back({-1, -1, -1, 1.0});  // 5: (1,0) -> 1
  t.nodes.push_back({-1, -1, -1, 0.0});  // 6: (1,1) -> 0
  m.trees.push_back(t);
  return m;
}

BackgroundSet make_background(const FeatureCatalog& catalog, std::vector<uint8_t> cells) {
  const size_t rows = cells.size() / catalog.size();
  std::vector<uint8_t> labels(rows, 0);
  return BackgroundSet{BinaryDataset(catalog, std::move(cells), std::move(labels)), 0};
}

BinaryDataset draw_dataset(size_t rows, size_t features, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::string> names;
  for (size_t f = 0; f < features; ++f) names.push_back("f" + std::to_string(f));
  std::vector<uint8_t> labels(rows), cells;
  for (size_t i = 0; i < rows; ++i) {
    labels[i] = static_cast<uint8_t>(rng() & 1);
    for (size_t f = 0; f < features; ++f) {
      // correlate features weakly with the label so trees have signal
      const bool agree = (rng() % 4) != 0;
      cells.push_back(agree ? labels[i] : static_cast<uint8_t>(rng() & 1));
    }
  }
  // ensure both classes
  labels[0] = 0;
  labels[rows - 1] = 1;
  return BinaryDataset(FeatureCatalog(std::move(names)), std::move(cells), std::move(labels));
}

TreeEnsembleModel random_model(const BinaryDataset& data, LearnerKind kind, uint64_t seed) {
  LearnerConfig c = kind == LearnerKind::random_forest ? random_forest_defaults(seed)
                                                       : gbdt_defaults(seed);
  c.n_trees = 6;
  c.min_samples_leaf = 1;
  c.max_depth = 4;
  return train_model(data, c);
}

}  // namespace

// ---------------------------------------------------------------------------
// Pinned hand-computed cases
// ---------------------------------------------------------------------------

TEST(ShapExact, StumpAgainstZeroBackground) {
  TreeEnsembleModel m = stump_model();
  BackgroundSet bg = make_background(m.catalog, {0});
  std::vector<uint8_t> x{1};
  ShapAttribution attr = shap_exact(m, x, bg, 42);
  EXPECT_DOUBLE_EQ(attr.base_value, 0.2);
  EXPECT_DOUBLE_EQ(attr.fx, 0.8);
  ASSERT_EQ(attr.phi.size(), 1u);
  EXPECT_DOUBLE_EQ(attr.phi[0], 0.6);
  EXPECT_EQ(attr.instance_id, 42u);
  EXPECT_FALSE(attr.model_id.empty());
  // Same instance as background -> nothing to attribute.
  std::vector<uint8_t> x0{0};
  ShapAttribution zero = shap_exact(m, x0, bg);
  EXPECT_EQ(zero.phi[0], 0.0);
  EXPECT_DOUBLE_EQ(zero.fx, zero.base_value);
}

TEST(ShapExact, XorSplitsCreditEqually) {
  TreeEnsembleModel m = xor_model();
  BackgroundSet bg = make_background(m.catalog, {0, 0, 0, 1, 1, 0, 1, 1});
  std::vector<uint8_t> x{1, 1};
  ShapAttribution attr = shap_exact(m, x, bg);
  EXPECT_DOUBLE_EQ(attr.base_value, 0.5);
  EXPECT_DOUBLE_EQ(attr.fx, 0.0);
  EXPECT_DOUBLE_EQ(attr.phi[0], -0.25);
  EXPECT_DOUBLE_EQ(attr.phi[1], -0.25);
}

TEST(ShapTree, MatchesPinnedCases) {
  {
    TreeEnsembleModel m = stump_model();
    BackgroundSet bg = make_background(m.catalog, {0});
    ShapAttribution attr = shap_tree(m, std::vector<uint8_t>{1}, bg);
    EXPECT_NEAR(attr.phi[0], 0.6, 1e-15);
    EXPECT_DOUBLE_EQ(attr.base_value, 0.2);
    EXPECT_DOUBLE_EQ(attr.fx, 0.8);
  }
  {
    TreeEnsembleModel m = xor_model();
    BackgroundSet bg = make_background(m.catalog, {0, 0, 0, 1, 1, 0, 1, 1});
    ShapAttribution attr = shap_tree(m, std::vector<uint8_t>{1, 1}, bg);
    EXPECT_NEAR(attr.phi[0], -0.25, 1e-15);
    EXPECT_NEAR(attr.phi[1], -0.25, 1e-15);
  }
}

// ---------------------------------------------------------------------------
// Oracle equivalences on trained models
// ---------------------------------------------------------------------------

TEST(ShapOracle, ExactMatchesPermutationEnumeration) {
  for (LearnerKind kind : {LearnerKind::random_forest, LearnerKind::gbdt}) {
    BinaryDataset data = draw_dataset(60, 5, 101);
    TreeEnsembleModel m = random_model(data, kind, 7);
    BackgroundSet bg = sample_background(data, 8, 3);
    for (size_t i = 0; i < 6; ++i) {
      auto x = data.row(i);
      ShapAttribution attr = shap_exact(m, x, bg);
      std::vector<double> want = permutation_shap(m, x, bg.rows);
      for (size_t f = 0; f < want.size(); ++f) {
        EXPECT_NEAR(attr.phi[f], want[f], 1e-9)
            << learner_kind_name(kind) << " row " << i << " feature " << f;
      }
    }
  }
}

TEST(ShapOracle, TreeMatchesExactEverywhere) {
  for (LearnerKind kind : {LearnerKind::random_forest, LearnerKind::gbdt}) {
    BinaryDataset data = draw_dataset(80, 6, 55);
    TreeEnsembleModel m = random_model(data, kind, 11);
    BackgroundSet bg = sample_background(data, 12, 9);
    for (size_t i = 0; i < 12; ++i) {
      auto x = data.row(i);
      ShapAttribution exact = shap_exact(m, x, bg);
      ShapAttribution fast = shap_tree(m, x, bg);
      EXPECT_DOUBLE_EQ(fast.base_value, exact.base_value);
      EXPECT_DOUBLE_EQ(fast.fx, exact.fx);
      for (size_t f = 0; f < exact.phi.size(); ++f) {
        EXPECT_NEAR(fast.phi[f], exact.phi[f], 1e-12)
            << learner_kind_name(kind) << " row " << i << " feature " << f;
      }
    }
  }
}

TEST(ShapProperties, AdditivityOnRandomModels) {
  std::mt19937_64 rng(2025);
  for (LearnerKind kind : {LearnerKind::random_forest, LearnerKind::gbdt}) {
    BinaryDataset data = draw_dataset(120, 9, 77);
    TreeEnsembleModel m = random_model(data, kind, 13);
    BackgroundSet bg = sample_background(data, 20, 1);
    TreeShapExplainer explainer(m, bg);
    for (int trial = 0; trial < 40; ++trial) {
      const size_t i = rng() % data.rows();
      ShapAttribution attr = explainer.explain(data.row(i), i);
      EXPECT_NEAR(attr.base_value + attr.phi_sum(), attr.fx, 1e-9)
          << learner_kind_name(kind) << " row " << i;
      EXPECT_DOUBLE_EQ(attr.fx, m.margin(data.row(i)));
    }
  }
}

TEST(ShapProperties, NullPlayerGetsExactZero) {
  // Model splits only on f0; f1 varies in data and background but is ignored.
  TreeEnsembleModel m;
  m.kind = LearnerKind::random_forest;
  m.catalog = FeatureCatalog({"f0", "f1"});
  Tree t;
  t.nodes.push_back({0, 1, 2, 0.0});
  t.nodes.push_back({-1, -1, -1, 0.1});
  t.nodes.push_back({-1, -1, -1, 0.9});
  m.trees.push_back(t);
  BackgroundSet bg = make_background(m.catalog, {0, 0, 0, 1, 1, 1});
  for (uint8_t x0 : {0, 1}) {
    for (uint8_t x1 : {0, 1}) {
      std::vector<uint8_t> x{x0, x1};
      EXPECT_EQ(shap_exact(m, x, bg).phi[1], 0.0);
      EXPECT_EQ(shap_tree(m, x, bg).phi[1], 0.0);
    }
  }
}

TEST(ShapProperties, SymmetricPlayersGetEqualCredit) {
  // Two stumps, one per feature, identical leaves; background symmetric.
  TreeEnsembleModel m;
  m.kind = LearnerKind::random_forest;
  m.catalog = FeatureCatalog({"a", "b"});
  for (int f = 0; f < 2; ++f) {
    Tree t;
    t.nodes.push_back({f, 1, 2, 0.0});
    t.nodes.push_back({-1, -1, -1, 0.25});
    t.nodes.push_back({-1, -1, -1, 0.75});
    m.trees.push_back(t);
  }
  BackgroundSet bg = make_background(m.catalog, {0, 0, 1, 1});
  std::vector<uint8_t> x{1, 1};
  ShapAttribution exact = shap_exact(m, x, bg);
  EXPECT_DOUBLE_EQ(exact.phi[0], exact.phi[1]);
  ShapAttribution fast = shap_tree(m, x, bg);
  EXPECT_DOUBLE_EQ(fast.phi[0], fast.phi[1]);
  EXPECT_NEAR(fast.phi[0], exact.phi[0], 1e-12);
}

TEST(ShapProperties, InstanceEqualsBackgroundMeansZeroEverywhere) {
  BinaryDataset data = draw_dataset(30, 7, 500);
  TreeEnsembleModel m = random_model(data, LearnerKind::gbdt, 3);
  std::vector<uint8_t> x(data.row(4).begin(), data.row(4).end());
  BackgroundSet bg = make_background(m.catalog, x);
  ShapAttribution attr = shap_tree(m, x, bg);
  for (double p : attr.phi) EXPECT_EQ(p, 0.0);
  EXPECT_EQ(attr.fx, attr.base_value);
}

// ---------------------------------------------------------------------------
// coalition_value / background sampling / guards
// ---------------------------------------------------------------------------

TEST(CoalitionValue, BoundaryCases) {
  TreeEnsembleModel m = xor_model();
  BackgroundSet bg = make_background(m.catalog, {0, 0, 0, 1, 1, 0, 1, 1});
  std::vector<uint8_t> x{1, 1};
  // Empty coalition: mean model output over the background.
  EXPECT_DOUBLE_EQ(coalition_value(m, x, std::vector<size_t>{}, bg), 0.5);
  // Full coalition: the model's own prediction.
  std::vector<size_t> all{0, 1};
  EXPECT_DOUBLE_EQ(coalition_value(m, x, all, bg), m.margin(x));
  // Pinning x1 only: backgrounds (·,0)->x2 of bg row decides.
  // composite rows: (1,0)->1, (1,1)->0, (1,0)->1, (1,1)->0 -> mean 0.5
  std::vector<size_t> first{0};
  EXPECT_DOUBLE_EQ(coalition_value(m, x, first, bg), 0.5);
}

TEST(Background, SamplingIsDeterministicSortedAndClamped) {
  BinaryDataset data = draw_dataset(50, 4, 9);
  BackgroundSet a = sample_background(data, 10, 77);
  BackgroundSet b = sample_background(data, 10, 77);
  EXPECT_EQ(a.rows.row_ids(), b.rows.row_ids());
  EXPECT_EQ(a.size(), 10u);
  EXPECT_TRUE(std::is_sorted(a.rows.row_ids().begin(), a.rows.row_ids().end()));
  BackgroundSet c = sample_background(data, 10, 78);
  EXPECT_NE(c.rows.row_ids(), a.rows.row_ids());
  BackgroundSet all = sample_background(data, 500, 1);
  EXPECT_EQ(all.size(), data.rows());
  EXPECT_THROW(sample_background(data, 0, 1), Error);
}

TEST(ShapGuards, WidthAndFeatureCountLimits) {
  TreeEnsembleModel m = stump_model();
  BackgroundSet bg = make_background(m.catalog, {0});
  std::vector<uint8_t> wide{1, 0};
  EXPECT_THROW(shap_exact(m, wide, bg), Error);
  EXPECT_THROW(shap_tree(m, wide, bg), Error);

  // 21 features is beyond the exact enumerator's limit.
  std::vector<std::string> names;
  for (int i = 0; i < 21; ++i) names.push_back("g" + std::to_string(i));
  TreeEnsembleModel big;
  big.kind = LearnerKind::random_forest;
  big.catalog = FeatureCatalog(names);
  Tree leaf;
  leaf.nodes.push_back({-1, -1, -1, 0.5});
  big.trees.push_back(leaf);
  BackgroundSet big_bg = make_background(big.catalog, std::vector<uint8_t>(21, 0));
  std::vector<uint8_t> x(21, 1);
  try {
    shap_exact(big, x, big_bg);
    FAIL() << "expected TooManyFeaturesForExact";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::too_many_features_for_exact);
  }
  // The polynomial explainer has no such limit.
  EXPECT_NO_THROW(shap_tree(big, x, big_bg));
}

// ---------------------------------------------------------------------------
// Global summaries
// ---------------------------------------------------------------------------

TEST(GlobalImportanceTest, AveragesAbsolutePhiAndRanks) {
  BinaryDataset data = draw_dataset(40, 5, 321);
  TreeEnsembleModel m = random_model(data, LearnerKind::random_forest, 21);
  BackgroundSet bg = sample_background(data, 8, 5);
  BinaryDataset test = data.take({0, 1, 2, 3, 4, 5});
  GlobalImportance gi = global_importance(m, test, bg, 2);

  // Manual recomputation.
  TreeShapExplainer explainer(m, bg);
  std::vector<double> want(m.features(), 0.0);
  for (size_t i = 0; i < test.rows(); ++i) {
    ShapAttribution attr = explainer.explain(test.row(i));
    for (size_t f = 0; f < want.size(); ++f) want[f] += std::abs(attr.phi[f]);
  }
  for (auto& v : want) v /= static_cast<double>(test.rows());
  ASSERT_EQ(gi.mean_abs_phi.size(), want.size());
  for (size_t f = 0; f < want.size(); ++f) EXPECT_DOUBLE_EQ(gi.mean_abs_phi[f], want[f]);

  // ranked: descending, complete, consistent with mean_abs_phi
  ASSERT_EQ(gi.ranked.size(), m.features());
  for (size_t i = 1; i < gi.ranked.size(); ++i) {
    EXPECT_GE(gi.ranked[i - 1].second, gi.ranked[i].second);
  }
  for (const auto& [name, v] : gi.ranked) {
    EXPECT_DOUBLE_EQ(v, gi.mean_abs_phi[m.catalog.index_of(name)]);
  }

  // points: top 2 features x rows, values copied from the test matrix
  ASSERT_EQ(gi.points.size(), 2 * test.rows());
  for (size_t i = 0; i < gi.points.size(); ++i) {
    const auto& p = gi.points[i];
    const size_t row = i % test.rows();
    const size_t f = m.catalog.index_of(p.feature);
    EXPECT_EQ(p.value, test.cell(row, f));
  }
}

TEST(ImportanceShiftTest, SortedByPeakMagnitude) {
  BinaryDataset data = draw_dataset(50, 6, 11);
  BinaryDataset other = draw_dataset(50, 6, 12);  // same catalog construction
  TreeEnsembleModel m = random_model(data, LearnerKind::random_forest, 31);
  BackgroundSet bg = sample_background(data, 10, 2);
  ImportanceShift shift = importance_shift(m, data, other, bg);
  ASSERT_EQ(shift.entries.size(), m.features());
  for (size_t i = 1; i < shift.entries.size(); ++i) {
    const auto& prev = shift.entries[i - 1];
    const auto& cur = shift.entries[i];
    EXPECT_GE(std::max(prev.intra_mean_abs, prev.cross_mean_abs),
              std::max(cur.intra_mean_abs, cur.cross_mean_abs));
  }
  // Values agree with standalone global_importance runs.
  GlobalImportance intra = global_importance(m, data, bg, 0);
  for (const auto& e : shift.entries) {
    EXPECT_DOUBLE_EQ(e.intra_mean_abs, intra.mean_abs_phi[m.catalog.index_of(e.feature)]);
  }
}

// ---------------------------------------------------------------------------
// Waterfall
// ---------------------------------------------------------------------------

namespace {
ShapAttribution fixed_attr() {
  ShapAttribution attr;
  attr.phi = {2.0, -0.5, 0.1, 0.0};
  attr.base_value = 1.0;
  attr.fx = 1.0 + 2.0 - 0.5 + 0.1;
  attr.instance_id = 9;
  attr.model_id = "test-model";
  return attr;
}
const FeatureCatalog kWfCatalog({"big", "neg", "small", "null"});
}  // namespace

TEST(WaterfallTest, TopNWithRestTerm) {
  Waterfall w = waterfall(fixed_attr(), kWfCatalog, 2);
  ASSERT_EQ(w.entries.size(), 3u);
  EXPECT_EQ(w.entries[0].label, "big");
  EXPECT_DOUBLE_EQ(w.entries[0].phi, 2.0);
  EXPECT_DOUBLE_EQ(w.entries[0].cumulative, 3.0);
  EXPECT_EQ(w.entries[1].label, "neg");
  EXPECT_DOUBLE_EQ(w.entries[1].cumulative, 2.5);
  EXPECT_EQ(w.entries[2].label, "rest");
  const ShapAttribution attr = fixed_attr();
  const double rest = (attr.fx - attr.base_value) - (2.0 - 0.5);
  EXPECT_DOUBLE_EQ(w.entries[2].phi, rest);
  // Final cumulative lands exactly on fx.
  EXPECT_DOUBLE_EQ(w.entries.back().cumulative, attr.fx);
}

TEST(WaterfallTest, NoRestWhenBudgetCoversAllNonZero) {
  Waterfall w = waterfall(fixed_attr(), kWfCatalog, 4);
  // phi == 0 stops the walk; kept(3) < keep(4) -> no rest entry.
  ASSERT_EQ(w.entries.size(), 3u);
  EXPECT_EQ(w.entries[2].label, "small");
  EXPECT_NEAR(w.entries.back().cumulative, fixed_attr().fx, 1e-12);
}

TEST(WaterfallTest, AllZeroPhiGivesEmptyEntries) {
  ShapAttribution attr;
  attr.phi = {0.0, 0.0};
  attr.base_value = 0.4;
  attr.fx = 0.4;
  Waterfall w = waterfall(attr, FeatureCatalog({"a", "b"}), 3);
  EXPECT_TRUE(w.entries.empty());
  EXPECT_DOUBLE_EQ(w.base_value, 0.4);
}

TEST(WaterfallTest, OrderIsByAbsPhiThenIndex) {
  ShapAttribution attr;
  attr.phi = {-0.3, 0.3, 0.7};
  attr.base_value = 0.0;
  attr.fx = 0.7;
  Waterfall w = waterfall(attr, FeatureCatalog({"m1", "m2", "top"}), 3);
  ASSERT_EQ(w.entries.size(), 3u);
  EXPECT_EQ(w.entries[0].label, "top");
  EXPECT_EQ(w.entries[1].label, "m1");  // |.3| tie -> lower index first
  EXPECT_EQ(w.entries[2].label, "m2");
}

TEST(WaterfallTest, RejectsZeroTopN) {
  EXPECT_THROW(waterfall(fixed_attr(), kWfCatalog, 0), Error);
}

// ---------------------------------------------------------------------------
// Export formats
// ---------------------------------------------------------------------------

TEST(ShapExports, AttributionJsonShape) {
  TreeEnsembleModel m = xor_model();
  BackgroundSet bg = make_background(m.catalog, {0, 0, 0, 1, 1, 0, 1, 1});
  ShapAttribution attr = shap_tree(m, std::vector<uint8_t>{1, 1}, bg, 3);
  ojson j = to_json(attr, m.catalog);
  EXPECT_EQ(j.at("instance_id").get<uint64_t>(), 3u);
  EXPECT_EQ(j.at("phi").size(), 2u);
  EXPECT_TRUE(j.at("phi").contains("x1"));
  EXPECT_DOUBLE_EQ(j.at("base_value").get<double>(), 0.5);
}

TEST(ShapExports, CsvShapes) {
  GlobalImportance gi;
  gi.points.push_back({"perm_a", 1, 0.25});
  gi.points.push_back({"perm_b", 0, -0.1});
  const std::string violin = violin_csv(gi);
  EXPECT_EQ(violin, "feature,value,phi\nperm_a,1,0.25\nperm_b,0,-0.1\n");

  ImportanceShift shift;
  shift.entries.push_back({"perm_a", 0.5, 0.125});
  const std::string csv = shift_csv(shift);
  EXPECT_EQ(csv, "feature,intra_mean_abs,cross_mean_abs\nperm_a,0.5,0.125\n");
}

TEST(ShapExports, DoubleFormattingIsShortestRoundTrip) {
  EXPECT_EQ(fmt_double(0.1), "0.1");
  EXPECT_EQ(fmt_double(1.0 / 3.0), "0.3333333333333333");
  EXPECT_EQ(fmt_double(-0.25), "-0.25");
  EXPECT_EQ(fmt_double(0.0), "0.0");
}
