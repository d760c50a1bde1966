#pragma once

// Pearson correlation and |r|-based feature ranking.
//
// pearson_r is two-pass (means first, then centered sums) and forms
// r = sxy / sqrt(sxx * syy) with a single square root of the product. With
// IEEE round-to-nearest, sqrt(s*s) == s exactly, so r(x, x) is exactly 1 even
// before clamping.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "permshift/common.hpp"
#include "permshift/dataset.hpp"

namespace permshift {

struct Correlation {
  double r = 0.0;
  bool degenerate = false;  // one of the inputs was constant; r is meaningless
};

inline Correlation pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(Errc::length_mismatch, "pearson_r: length mismatch");
  if (x.size() < 2) fail(Errc::too_few_samples, "pearson_r: need at least 2 samples");

  const size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);

  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return {0.0, true};
  double r = sxy / std::sqrt(sxx * syy);
  r = std::clamp(r, -1.0, 1.0);
  return {r, false};
}

struct RankedFeature {
  std::string name;
  double r = 0.0;
  double abs_r = 0.0;
};

struct CorrelationRanking {
  std::vector<RankedFeature> entries;  // sorted by |r| descending, then name ascending
  size_t n_samples = 0;
};

// Correlates every feature column with the label and ranks by |r|. Constant
// features get |r| = 0 (they sort last). A single-class label column makes
// every correlation undefined, so that is an error.
inline CorrelationRanking rank_features(const BinaryDataset& data) {
  const size_t ones = data.count_label(1);
  if (ones == 0 || ones == data.rows()) {
    fail(Errc::single_class_dataset, "label column is constant; correlations undefined");
  }
  std::vector<double> y(data.rows());
  for (size_t i = 0; i < data.rows(); ++i) y[i] = static_cast<double>(data.label(i));

  CorrelationRanking ranking;
  ranking.n_samples = data.rows();
  ranking.entries.resize(data.features());
  parallel_for(data.features(), [&](size_t f) {
    std::vector<double> x(data.rows());
    for (size_t i = 0; i < data.rows(); ++i) x[i] = static_cast<double>(data.cell(i, f));
    Correlation c = pearson_r(x, y);
    const double r = c.degenerate ? 0.0 : c.r;
    ranking.entries[f] = {data.catalog().name(f), r, std::abs(r)};
  });
  std::sort(ranking.entries.begin(), ranking.entries.end(),
            [](const RankedFeature& a, const RankedFeature& b) {
              if (a.abs_r != b.abs_r) return a.abs_r > b.abs_r;
              return a.name < b.name;
            });
  return ranking;
}

}  // namespace permshift
