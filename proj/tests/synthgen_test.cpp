#include <gtest/gtest.h>

#include <map>

#include "permshift/catalog.hpp"
#include "permshift/correlation.hpp"
#include "permshift/synthgen.hpp"

using namespace permshift;

namespace {

ShiftSpec small_spec() {
  ShiftSpec s;
  s.rows_per_domain = 600;
  s.class_balance = 0.5;
  s.seed = 7;
  s.shared_stable = {4, 0.2, 0.7};
  s.shared_flipped = {3, 0.15, 0.65};
  s.shared_attenuated = {2, 0.2, 0.6};
  s.attenuation = 0.3;
  s.a_only = {5, 0.25, 0.5};
  s.b_only = {2, 0.3, 0.45};
  s.noise = {3, 0.4};
  return s;
}

double empirical_rate(const BinaryDataset& d, const std::string& feature, uint8_t cls) {
  const size_t f = d.catalog().index_of(feature);
  size_t hits = 0, n = 0;
  for (size_t i = 0; i < d.rows(); ++i) {
    if (d.label(i) != cls) continue;
    ++n;
    hits += d.cell(i, f);
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

double label_correlation(const BinaryDataset& d, const std::string& feature) {
  const size_t f = d.catalog().index_of(feature);
  std::vector<double> x(d.rows()), y(d.rows());
  for (size_t i = 0; i < d.rows(); ++i) {
    x[i] = d.cell(i, f);
    y[i] = d.label(i);
  }
  return pearson_r(x, y).r;
}

}  // namespace

TEST(ShiftSpecTest, ValidationCatchesBadValues) {
  ShiftSpec s = small_spec();
  s.class_balance = 0.0;
  EXPECT_THROW(s.validate(), Error);
  s = small_spec();
  s.shared_stable.p_malware = 1.5;
  EXPECT_THROW(s.validate(), Error);
  s = small_spec();
  s.attenuation = -0.1;
  EXPECT_THROW(s.validate(), Error);
  s = small_spec();
  s.rows_per_domain = 2;
  EXPECT_THROW(s.validate(), Error);
  s = small_spec();
  s.shared_stable.count = 0;
  s.shared_flipped.count = 0;
  s.shared_attenuated.count = 0;
  EXPECT_THROW(s.validate(), Error);
  try {
    s.validate();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_spec);
  }
}

TEST(SynthGen, CatalogLayoutAndIntersection) {
  ShiftSpec s = small_spec();
  auto [a, b] = generate_domain_pair(s);

  // A: stable + flip + atten + noise + aonly; B swaps aonly for bonly.
  EXPECT_EQ(a.features(), 4u + 3u + 2u + 3u + 5u);
  EXPECT_EQ(b.features(), 4u + 3u + 2u + 3u + 2u);
  EXPECT_EQ(a.rows(), 600u);
  EXPECT_EQ(b.rows(), 600u);

  EXPECT_TRUE(a.catalog().contains("stable_000"));
  EXPECT_TRUE(a.catalog().contains("aonly_004"));
  EXPECT_FALSE(a.catalog().contains("bonly_000"));
  EXPECT_TRUE(b.catalog().contains("bonly_001"));
  EXPECT_FALSE(b.catalog().contains("aonly_000"));

  FeatureCatalog common = catalog_intersection(a.catalog(), b.catalog());
  EXPECT_EQ(common.size(), 4u + 3u + 2u + 3u);  // everything shared incl. noise
  for (const auto& name : common.names()) {
    EXPECT_TRUE(name.rfind("aonly", 0) != 0 && name.rfind("bonly", 0) != 0) << name;
  }
}

TEST(SynthGen, DeterministicForSeedAndIndependentOfThreads) {
  ShiftSpec s = small_spec();
  auto [a1, b1] = generate_domain_pair(s);
  set_max_threads(1);
  auto [a2, b2] = generate_domain_pair(s);
  set_max_threads(0);
  EXPECT_EQ(a1.cells(), a2.cells());
  EXPECT_EQ(a1.labels(), a2.labels());
  EXPECT_EQ(b1.cells(), b2.cells());

  s.seed = 8;
  auto [a3, b3] = generate_domain_pair(s);
  EXPECT_NE(a3.cells(), a1.cells());
  (void)b3;
}

TEST(SynthGen, DomainsDifferButShareMechanism) {
  ShiftSpec s = small_spec();
  auto [a, b] = generate_domain_pair(s);
  // Same seed, different domain stream: the raw matrices must differ.
  EXPECT_NE(a.cells(), b.cells());
}

TEST(SynthGen, EmpiricalRatesMatchSpec) {
  ShiftSpec s = small_spec();
  s.rows_per_domain = 8000;  // tight empirical estimates
  auto [a, b] = generate_domain_pair(s);

  const double tol = 0.03;
  // class balance
  EXPECT_NEAR(static_cast<double>(a.count_label(1)) / a.rows(), 0.5, tol);
  EXPECT_NEAR(static_cast<double>(b.count_label(1)) / b.rows(), 0.5, tol);

  for (int domain = 0; domain < 2; ++domain) {
    const BinaryDataset& d = domain == 0 ? a : b;
    for (const FeatureProb& p : domain_probabilities(s, domain)) {
      EXPECT_NEAR(empirical_rate(d, p.name, 0), p.p_benign, tol)
          << "domain " << domain << " " << p.name << " benign";
      EXPECT_NEAR(empirical_rate(d, p.name, 1), p.p_malware, tol)
          << "domain " << domain << " " << p.name << " malware";
    }
  }

  // The flipped group swaps class conditionals in B.
  for (const FeatureProb& p : domain_probabilities(s, 1)) {
    if (p.name.rfind("flip", 0) == 0) {
      EXPECT_DOUBLE_EQ(p.p_benign, s.shared_flipped.p_malware);
      EXPECT_DOUBLE_EQ(p.p_malware, s.shared_flipped.p_benign);
    }
  }

  // Attenuated group in B: same midpoint, contracted gap.
  const double mid = 0.5 * (s.shared_attenuated.p_benign + s.shared_attenuated.p_malware);
  for (const FeatureProb& p : domain_probabilities(s, 1)) {
    if (p.name.rfind("atten", 0) == 0) {
      EXPECT_NEAR(0.5 * (p.p_benign + p.p_malware), mid, 1e-15);
      EXPECT_NEAR(p.p_malware - p.p_benign,
                  s.attenuation * (s.shared_attenuated.p_malware - s.shared_attenuated.p_benign),
                  1e-15);
    }
  }
}

TEST(SynthGen, FlippedFeaturesReverseCorrelationSign) {
  ShiftSpec s = small_spec();
  s.rows_per_domain = 6000;
  auto [a, b] = generate_domain_pair(s);
  for (size_t i = 0; i < s.shared_flipped.count; ++i) {
    const std::string name = "flip_00" + std::to_string(i);
    const double ra = label_correlation(a, name);
    const double rb = label_correlation(b, name);
    EXPECT_GT(ra, 0.2) << name;
    EXPECT_LT(rb, -0.2) << name;
  }
  // Stable features keep their sign and rough magnitude.
  for (size_t i = 0; i < s.shared_stable.count; ++i) {
    const std::string name = "stable_00" + std::to_string(i);
    EXPECT_GT(label_correlation(a, name), 0.2) << name;
    EXPECT_GT(label_correlation(b, name), 0.2) << name;
  }
  // Noise features hover near zero in both.
  EXPECT_NEAR(label_correlation(a, "noise_000"), 0.0, 0.05);
  EXPECT_NEAR(label_correlation(b, "noise_000"), 0.0, 0.05);
}

TEST(SynthGen, StableOnlySpecProducesNoDistributionShift) {
  ShiftSpec s;
  s.rows_per_domain = 400;
  s.seed = 11;
  s.shared_stable = {5, 0.2, 0.7};
  s.shared_flipped = {0, 0, 0};
  s.shared_attenuated = {0, 0, 0};
  s.a_only = {0, 0, 0};
  s.b_only = {0, 0, 0};
  s.noise = {0, 0.5};
  auto [a, b] = generate_domain_pair(s);
  EXPECT_EQ(a.catalog(), b.catalog());
  // Same generating distribution; only the per-domain stream differs.
  auto pa = domain_probabilities(s, 0);
  auto pb = domain_probabilities(s, 1);
  ASSERT_EQ(pa.size(), pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_EQ(pa[i].p_benign, pb[i].p_benign);
    EXPECT_EQ(pa[i].p_malware, pb[i].p_malware);
  }
}

TEST(SynthGen, DefaultSpecIsPinned) {
  ShiftSpec s = default_shift_spec();
  EXPECT_NO_THROW(s.validate());
  EXPECT_EQ(s.rows_per_domain, 6000u);
  EXPECT_EQ(s.seed, 42u);
  EXPECT_EQ(s.shared_stable.count, 30u);
  EXPECT_EQ(s.shared_flipped.count, 14u);
  EXPECT_EQ(s.shared_attenuated.count, 12u);
  EXPECT_EQ(s.a_only.count, 46u);
  EXPECT_EQ(s.b_only.count, 8u);
  EXPECT_EQ(s.noise.count, 12u);
  // The probabilities are part of the pin: the acceptance gate's domain-shift
  // thresholds were measured against exactly these rates.
  EXPECT_DOUBLE_EQ(s.shared_stable.p_benign, 0.18);
  EXPECT_DOUBLE_EQ(s.shared_stable.p_malware, 0.55);
  EXPECT_DOUBLE_EQ(s.shared_flipped.p_benign, 0.17);
  EXPECT_DOUBLE_EQ(s.shared_flipped.p_malware, 0.56);
  EXPECT_DOUBLE_EQ(s.shared_attenuated.p_benign, 0.20);
  EXPECT_DOUBLE_EQ(s.shared_attenuated.p_malware, 0.50);
  EXPECT_DOUBLE_EQ(s.attenuation, 0.3);
  EXPECT_DOUBLE_EQ(s.a_only.p_benign, 0.25);
  EXPECT_DOUBLE_EQ(s.a_only.p_malware, 0.45);
  EXPECT_DOUBLE_EQ(s.b_only.p_benign, 0.30);
  EXPECT_DOUBLE_EQ(s.b_only.p_malware, 0.42);
  EXPECT_DOUBLE_EQ(s.noise.p_one, 0.35);
  EXPECT_DOUBLE_EQ(s.class_balance, 0.5);
  // A: 30+14+12+12+46 = 114 features; B: 30+14+12+12+8 = 76.
  auto pa = domain_probabilities(s, 0);
  auto pb = domain_probabilities(s, 1);
  EXPECT_EQ(pa.size(), 114u);
  EXPECT_EQ(pb.size(), 76u);
}

TEST(ShiftSpecJson, RoundTrip) {
  ShiftSpec s = small_spec();
  ojson j = to_json(s);
  ShiftSpec back = shift_spec_from_json(j);
  EXPECT_EQ(to_json(back).dump(), j.dump());
  EXPECT_EQ(back.rows_per_domain, s.rows_per_domain);
  EXPECT_EQ(back.seed, s.seed);
  EXPECT_EQ(back.shared_flipped.count, s.shared_flipped.count);
  EXPECT_DOUBLE_EQ(back.attenuation, s.attenuation);

  // from_json validates
  ojson bad = j;
  bad["class_balance"] = 2.0;
  EXPECT_THROW(shift_spec_from_json(bad), Error);
}
