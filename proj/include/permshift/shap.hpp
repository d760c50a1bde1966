#pragma once

// Exact Shapley attribution for tree ensembles under interventional
// (background-marginal) semantics: a coalition S takes the instance's values,
// everything else is drawn from a background row, and f(S) is the mean model
// output over the background. Two implementations:
//
//  * shap_exact — the literal weighted sum over all 2^F subsets. Exponential;
//    guarded to F <= 20. Exists as the semantic ground truth.
//  * TreeShapExplainer — polynomial per-(tree, background-row) path walk.
//    Where the instance and the background row disagree on a split feature,
//    both branches are explored, tracking which side "owns" the decision; a
//    leaf reached with a instance-owned and b background-owned decisions
//    contributes value * (a-1)! b! / (a+b)! to each instance-owned feature
//    and -value * a! (b-1)! / (a+b)! to each background-owned one. Summing
//    over trees and background rows reproduces shap_exact.
//
// Attribution space is the model margin: probability for forests, log-odds
// for gbdt. Per-tree additivity is exact only there; probabilities are still
// reported alongside for display.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "permshift/common.hpp"
#include "permshift/dataset.hpp"
#include "permshift/learners.hpp"

namespace permshift {

struct BackgroundSet {
  BinaryDataset rows;  // labels carried but ignored
  uint64_t sampling_seed = 0;

  size_t size() const { return rows.rows(); }
};

// size rows sampled without replacement (all rows when size >= data rows),
// kept in ascending original order.
inline BackgroundSet sample_background(const BinaryDataset& data, size_t size, uint64_t seed) {
  if (size == 0) fail(Errc::config_error, "background size must be >= 1");
  const size_t n = data.rows();
  std::vector<size_t> pool(n);
  std::iota(pool.begin(), pool.end(), size_t{0});
  const size_t take = std::min(size, n);
  Rng rng(derive_seed(seed, "background_sample"));
  for (size_t i = 0; i < take; ++i) {
    const size_t j = i + rng.next_below(n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(take);
  std::sort(pool.begin(), pool.end());
  return BackgroundSet{data.take(pool), seed};
}

struct ShapAttribution {
  std::vector<double> phi;  // catalog order
  double base_value = 0.0;  // E[f(Z)] over the background, margin space
  double fx = 0.0;          // f(x), margin space
  double base_proba = 0.0;  // display space
  double fx_proba = 0.0;
  uint64_t instance_id = 0;
  std::string model_id;

  double phi_sum() const {
    double s = 0.0;
    for (double p : phi) s += p;
    return s;
  }
};

namespace detail {

inline std::vector<long double> factorial_table(size_t n) {
  std::vector<long double> fact(n + 1);
  fact[0] = 1.0L;
  for (size_t i = 1; i <= n; ++i) fact[i] = fact[i - 1] * static_cast<long double>(i);
  return fact;
}

}  // namespace detail

// Mean model margin over the background with features in S pinned to the
// instance's values. S holds catalog indices.
inline double coalition_value(const TreeEnsembleModel& model, std::span<const uint8_t> x,
                              std::span<const size_t> subset, const BackgroundSet& background) {
  model.check_width(x.size());
  if (background.rows.catalog() != model.catalog) {
    fail(Errc::width_mismatch, "background catalog does not match model catalog");
  }
  std::vector<uint8_t> composite(model.features());
  double total = 0.0;
  for (size_t r = 0; r < background.size(); ++r) {
    auto z = background.rows.row(r);
    std::copy(z.begin(), z.end(), composite.begin());
    for (size_t f : subset) {
      internal_check(f < composite.size(), "coalition index out of range");
      composite[f] = x[f];
    }
    total += model.margin(composite);
  }
  return total / static_cast<double>(background.size());
}

// Full Eq.-style Shapley sum over all subsets. The per-mask coalition values
// are computed once and reused for every feature's marginal differences.
inline ShapAttribution shap_exact(const TreeEnsembleModel& model, std::span<const uint8_t> x,
                                  const BackgroundSet& background, uint64_t instance_id = 0) {
  model.check_width(x.size());
  const size_t F = model.features();
  if (F > 20) {
    fail(Errc::too_many_features_for_exact,
         "shap_exact supports at most 20 features, got " + std::to_string(F));
  }
  if (background.rows.catalog() != model.catalog) {
    fail(Errc::width_mismatch, "background catalog does not match model catalog");
  }

  const size_t n_masks = size_t{1} << F;
  std::vector<double> value(n_masks);
  std::vector<uint8_t> composite(F);
  for (size_t mask = 0; mask < n_masks; ++mask) {
    double total = 0.0;
    for (size_t r = 0; r < background.size(); ++r) {
      auto z = background.rows.row(r);
      for (size_t f = 0; f < F; ++f) {
        composite[f] = (mask >> f) & 1 ? x[f] : z[f];
      }
      total += model.margin(composite);
    }
    value[mask] = total / static_cast<double>(background.size());
  }

  const auto fact = detail::factorial_table(F);
  ShapAttribution attr;
  attr.phi.assign(F, 0.0);
  for (size_t i = 0; i < F; ++i) {
    const size_t bit = size_t{1} << i;
    long double phi = 0.0L;
    for (size_t mask = 0; mask < n_masks; ++mask) {
      if (mask & bit) continue;
      const int s = std::popcount(mask);
      const long double w =
          fact[static_cast<size_t>(s)] * fact[F - static_cast<size_t>(s) - 1] / fact[F];
      phi += w * static_cast<long double>(value[mask | bit] - value[mask]);
    }
    attr.phi[i] = static_cast<double>(phi);
  }
  attr.base_value = value[0];
  attr.fx = value[n_masks - 1];
  attr.base_proba = model.margin_to_proba(attr.base_value);
  attr.fx_proba = model.margin_to_proba(attr.fx);
  attr.instance_id = instance_id;
  attr.model_id = model.describe();
  return attr;
}

// Polynomial interventional explainer; see file header for the algorithm.
class TreeShapExplainer {
 public:
  TreeShapExplainer(const TreeEnsembleModel& model, BackgroundSet background)
      : model_(model),
        background_(std::move(background)),
        fact_(detail::factorial_table(model.features() + 1)) {
    if (background_.rows.catalog() != model_.catalog) {
      fail(Errc::width_mismatch, "background catalog does not match model catalog");
    }
    double total = 0.0;
    for (size_t r = 0; r < background_.size(); ++r) {
      total += model_.margin(background_.rows.row(r));
    }
    base_value_ = total / static_cast<double>(background_.size());
  }

  const BackgroundSet& background() const { return background_; }
  const TreeEnsembleModel& model() const { return model_; }
  double base_value() const { return base_value_; }

  // Thread-safe: per-call scratch only.
  ShapAttribution explain(std::span<const uint8_t> x, uint64_t instance_id = 0) const {
    model_.check_width(x.size());
    const size_t F = model_.features();
    ShapAttribution attr;
    attr.phi.assign(F, 0.0);
    attr.fx = model_.margin(x);
    attr.base_value = base_value_;
    attr.base_proba = model_.margin_to_proba(base_value_);
    attr.fx_proba = model_.margin_to_proba(attr.fx);
    attr.instance_id = instance_id;
    attr.model_id = model_.describe();

    const double per_tree =
        model_.kind == LearnerKind::random_forest
            ? 1.0 / static_cast<double>(model_.trees.size())
            : 1.0;
    const double scale = per_tree / static_cast<double>(background_.size());

    Walk walk;
    walk.owner.assign(F, Owner::none);
    for (const Tree& tree : model_.trees) {
      for (size_t r = 0; r < background_.size(); ++r) {
        walk.x = x;
        walk.z = background_.rows.row(r);
        walk.tree = &tree;
        walk.scale = scale;
        walk.phi = attr.phi.data();
        walk.fact = fact_.data();
        walk.players.clear();
        walk.a = walk.b = 0;
        descend(walk, 0);
      }
    }
    return attr;
  }

 private:
  enum class Owner : uint8_t { none, instance, background };

  struct Walk {
    std::span<const uint8_t> x;
    std::span<const uint8_t> z;
    const Tree* tree = nullptr;
    double scale = 0.0;
    double* phi = nullptr;
    const long double* fact = nullptr;
    std::vector<Owner> owner;                          // per feature, restored on unwind
    std::vector<std::pair<int32_t, Owner>> players;    // path decisions
    size_t a = 0, b = 0;                               // instance/background owned counts
  };

  static void descend(Walk& w, int32_t node_idx) {
    const TreeNode& node = w.tree->nodes[static_cast<size_t>(node_idx)];
    if (node.feature < 0) {
      settle_leaf(w, node.value);
      return;
    }
    const size_t f = static_cast<size_t>(node.feature);
    const uint8_t xv = w.x[f];
    const uint8_t zv = w.z[f];
    if (xv == zv) {
      descend(w, xv ? node.right : node.left);
      return;
    }
    switch (w.owner[f]) {
      case Owner::instance:
        descend(w, xv ? node.right : node.left);
        return;
      case Owner::background:
        descend(w, zv ? node.right : node.left);
        return;
      case Owner::none:
        break;
    }
    // New player: explore the instance-owned branch, then the background-owned
    // one, restoring state on the way out.
    w.owner[f] = Owner::instance;
    w.players.emplace_back(node.feature, Owner::instance);
    ++w.a;
    descend(w, xv ? node.right : node.left);
    --w.a;
    w.players.back().second = Owner::background;
    w.owner[f] = Owner::background;
    ++w.b;
    descend(w, zv ? node.right : node.left);
    --w.b;
    w.players.pop_back();
    w.owner[f] = Owner::none;
  }

  static void settle_leaf(Walk& w, double value) {
    const size_t a = w.a, b = w.b;
    if (a + b == 0) return;  // leaf shared by x and z contributes nothing
    const long double denom = w.fact[a + b];
    const long double w_instance = a > 0 ? w.fact[a - 1] * w.fact[b] / denom : 0.0L;
    const long double w_background = b > 0 ? w.fact[a] * w.fact[b - 1] / denom : 0.0L;
    const long double v = static_cast<long double>(value) * w.scale;
    for (const auto& [feature, side] : w.players) {
      if (side == Owner::instance) {
        w.phi[feature] += static_cast<double>(v * w_instance);
      } else {
        w.phi[feature] -= static_cast<double>(v * w_background);
      }
    }
  }

  const TreeEnsembleModel& model_;
  BackgroundSet background_;
  std::vector<long double> fact_;
  double base_value_ = 0.0;
};

inline ShapAttribution shap_tree(const TreeEnsembleModel& model, std::span<const uint8_t> x,
                                 const BackgroundSet& background, uint64_t instance_id = 0) {
  TreeShapExplainer explainer(model, background);
  return explainer.explain(x, instance_id);
}

// ---------------------------------------------------------------------------
// Global summaries
// ---------------------------------------------------------------------------

struct GlobalImportance {
  std::vector<double> mean_abs_phi;  // catalog order
  // (feature, mean|phi|) sorted descending, ties by name ascending.
  std::vector<std::pair<std::string, double>> ranked;

  struct Point {
    std::string feature;
    uint8_t value = 0;
    double phi = 0.0;
  };
  std::vector<Point> points;  // raw clouds for the top-N ranked features
};

// Explains every row of test (parallel, one slot per row) and aggregates.
inline GlobalImportance global_importance(const TreeEnsembleModel& model,
                                          const BinaryDataset& test,
                                          const BackgroundSet& background, size_t top_n = 15) {
  if (test.rows() == 0) fail(Errc::empty_dataset, "global_importance: empty test set");
  if (test.catalog() != model.catalog) {
    fail(Errc::width_mismatch, "test set not aligned to model catalog");
  }
  TreeShapExplainer explainer(model, background);
  std::vector<ShapAttribution> attrs(test.rows());
  parallel_for(test.rows(), [&](size_t i) {
    attrs[i] = explainer.explain(test.row(i), test.row_ids()[i]);
  });

  const size_t F = model.features();
  GlobalImportance gi;
  gi.mean_abs_phi.assign(F, 0.0);
  for (const auto& attr : attrs) {
    for (size_t f = 0; f < F; ++f) gi.mean_abs_phi[f] += std::abs(attr.phi[f]);
  }
  for (double& v : gi.mean_abs_phi) v /= static_cast<double>(test.rows());

  gi.ranked.reserve(F);
  for (size_t f = 0; f < F; ++f) gi.ranked.emplace_back(model.catalog.name(f), gi.mean_abs_phi[f]);
  std::sort(gi.ranked.begin(), gi.ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  const size_t keep = std::min(top_n, F);
  for (size_t rank = 0; rank < keep; ++rank) {
    const size_t f = model.catalog.index_of(gi.ranked[rank].first);
    for (size_t i = 0; i < test.rows(); ++i) {
      gi.points.push_back({gi.ranked[rank].first, test.cell(i, f), attrs[i].phi[f]});
    }
  }
  return gi;
}

struct ImportanceShiftEntry {
  std::string feature;
  double intra_mean_abs = 0.0;
  double cross_mean_abs = 0.0;
};

struct ImportanceShift {
  // Sorted by max(intra, cross) descending, ties by name ascending.
  std::vector<ImportanceShiftEntry> entries;
};

// Same model explained on its home-domain test set and on a foreign one.
inline ImportanceShift importance_shift(const TreeEnsembleModel& model,
                                        const BinaryDataset& intra_test,
                                        const BinaryDataset& cross_test,
                                        const BackgroundSet& background) {
  GlobalImportance intra = global_importance(model, intra_test, background, 0);
  GlobalImportance cross = global_importance(model, cross_test, background, 0);
  ImportanceShift shift;
  shift.entries.reserve(model.features());
  for (size_t f = 0; f < model.features(); ++f) {
    shift.entries.push_back(
        {model.catalog.name(f), intra.mean_abs_phi[f], cross.mean_abs_phi[f]});
  }
  std::sort(shift.entries.begin(), shift.entries.end(),
            [](const ImportanceShiftEntry& a, const ImportanceShiftEntry& b) {
              const double ma = std::max(a.intra_mean_abs, a.cross_mean_abs);
              const double mb = std::max(b.intra_mean_abs, b.cross_mean_abs);
              if (ma != mb) return ma > mb;
              return a.feature < b.feature;
            });
  return shift;
}

// ---------------------------------------------------------------------------
// Waterfalls
// ---------------------------------------------------------------------------

struct WaterfallEntry {
  std::string label;  // feature name, or "rest" for the collapsed tail
  double phi = 0.0;
  double cumulative = 0.0;  // base_value + contributions so far
};

struct Waterfall {
  double base_value = 0.0;
  double fx = 0.0;
  double base_proba = 0.0;
  double fx_proba = 0.0;
  uint64_t instance_id = 0;
  std::string model_id;
  std::vector<WaterfallEntry> entries;
};

// Top-n contributions by |phi| (zero-phi features are skipped); everything
// else collapses into a "rest" term computed as (fx - base) - sum(kept) so the
// final cumulative lands on fx exactly.
inline Waterfall waterfall(const ShapAttribution& attr, const FeatureCatalog& catalog,
                           size_t top_n) {
  if (top_n < 1) fail(Errc::config_error, "waterfall top_n must be >= 1");
  internal_check(attr.phi.size() == catalog.size(), "waterfall: phi/catalog size mismatch");

  std::vector<size_t> order(attr.phi.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    const double ma = std::abs(attr.phi[a]), mb = std::abs(attr.phi[b]);
    if (ma != mb) return ma > mb;
    return a < b;
  });

  Waterfall w;
  w.base_value = attr.base_value;
  w.fx = attr.fx;
  w.base_proba = attr.base_proba;
  w.fx_proba = attr.fx_proba;
  w.instance_id = attr.instance_id;
  w.model_id = attr.model_id;

  const size_t keep = std::min(top_n, order.size());
  double cumulative = attr.base_value;
  double kept_sum = 0.0;
  size_t kept = 0;
  for (size_t rank = 0; rank < keep; ++rank) {
    const size_t f = order[rank];
    if (attr.phi[f] == 0.0) break;  // remaining entries are all zero too
    cumulative += attr.phi[f];
    kept_sum += attr.phi[f];
    w.entries.push_back({catalog.name(f), attr.phi[f], cumulative});
    ++kept;
  }
  // A rest term only when the top_n budget was exhausted with features left
  // over; an early stop on zero phi leaves nothing meaningful to collapse.
  if (kept == keep && keep < order.size()) {
    const double rest = (attr.fx - attr.base_value) - kept_sum;
    cumulative += rest;
    w.entries.push_back({"rest", rest, cumulative});
  }
  return w;
}

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

using ojson = nlohmann::ordered_json;

// Shortest-round-trip decimal form, as used in the JSON artifacts.
inline std::string fmt_double(double v) { return ojson(v).dump(); }

inline ojson to_json(const ShapAttribution& attr, const FeatureCatalog& catalog) {
  ojson phi = ojson::object();
  for (size_t f = 0; f < attr.phi.size(); ++f) phi[catalog.name(f)] = attr.phi[f];
  return ojson{{"instance_id", attr.instance_id}, {"model_id", attr.model_id},
               {"base_value", attr.base_value},   {"fx", attr.fx},
               {"base_proba", attr.base_proba},   {"fx_proba", attr.fx_proba},
               {"phi", std::move(phi)}};
}

inline std::string violin_csv(const GlobalImportance& gi) {
  std::string out = "feature,value,phi\n";
  for (const auto& p : gi.points) {
    out += p.feature;
    out += ',';
    out += static_cast<char>('0' + p.value);
    out += ',';
    out += fmt_double(p.phi);
    out += '\n';
  }
  return out;
}

inline std::string shift_csv(const ImportanceShift& shift) {
  std::string out = "feature,intra_mean_abs,cross_mean_abs\n";
  for (const auto& e : shift.entries) {
    out += e.feature;
    out += ',';
    out += fmt_double(e.intra_mean_abs);
    out += ',';
    out += fmt_double(e.cross_mean_abs);
    out += '\n';
  }
  return out;
}

inline ojson to_json(const Waterfall& w) {
  ojson entries = ojson::array();
  for (const auto& e : w.entries) {
    entries.push_back(ojson{{"label", e.label}, {"phi", e.phi}, {"cumulative", e.cumulative}});
  }
  return ojson{{"instance_id", w.instance_id}, {"model_id", w.model_id},
               {"base_value", w.base_value},   {"fx", w.fx},
               {"base_proba", w.base_proba},   {"fx_proba", w.fx_proba},
               {"entries", std::move(entries)}};
}

}  // namespace permshift
