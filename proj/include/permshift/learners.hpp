#pragma once

// From-scratch tree ensembles over binary features.
//
//  * random forest: bagged CART with Gini impurity, per-split feature
//    subsampling of ceil(sqrt(F)) candidates, class-probability leaves.
//  * gbdt: histogram-style gradient boosting with logistic loss; binary
//    features make every histogram two bins, so split search is a single
//    scan per feature per node. Leaves hold Newton steps (-lr * G/H) and the
//    model predicts through base_score + sum of leaf values (log-odds).
//
// Training is deterministic for a given (data, config.seed) regardless of
// worker count: forest trees derive per-tree seeds and build independently;
// gbdt is sequential by nature.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "permshift/common.hpp"
#include "permshift/dataset.hpp"

namespace permshift {

enum class LearnerKind { random_forest, gbdt };

inline const char* learner_kind_name(LearnerKind k) {
  return k == LearnerKind::random_forest ? "random_forest" : "gbdt";
}

inline LearnerKind learner_kind_from_name(const std::string& s) {
  if (s == "random_forest") return LearnerKind::random_forest;
  if (s == "gbdt") return LearnerKind::gbdt;
  fail(Errc::config_error, "unknown learner kind: '" + s + "'");
}

enum class FeatureSubsample { sqrt_count, all };

struct LearnerConfig {
  LearnerKind kind = LearnerKind::random_forest;
  int n_trees = 100;
  std::optional<int> max_depth;  // nullopt = unlimited
  int min_samples_leaf = 1;
  double learning_rate = 0.1;                                  // gbdt only
  FeatureSubsample feature_subsample = FeatureSubsample::all;  // forest only
  uint64_t seed = 0;

  void validate() const {
    if (n_trees < 1) fail(Errc::config_error, "n_trees must be >= 1");
    if (max_depth && *max_depth < 1) fail(Errc::config_error, "max_depth must be >= 1");
    if (min_samples_leaf < 1) fail(Errc::config_error, "min_samples_leaf must be >= 1");
    if (kind == LearnerKind::gbdt && !(learning_rate > 0.0 && learning_rate <= 1.0)) {
      fail(Errc::config_error, "learning_rate must be in (0, 1]");
    }
  }
};

inline LearnerConfig random_forest_defaults(uint64_t seed = 0) {
  LearnerConfig c;
  c.kind = LearnerKind::random_forest;
  c.n_trees = 100;
  c.max_depth.reset();
  c.min_samples_leaf = 1;
  c.feature_subsample = FeatureSubsample::sqrt_count;
  c.seed = seed;
  return c;
}

inline LearnerConfig gbdt_defaults(uint64_t seed = 0) {
  LearnerConfig c;
  c.kind = LearnerKind::gbdt;
  c.n_trees = 100;
  c.max_depth = 6;
  c.min_samples_leaf = 20;
  c.learning_rate = 0.1;
  c.feature_subsample = FeatureSubsample::all;
  c.seed = seed;
  return c;
}

// ---------------------------------------------------------------------------
// Trees
// ---------------------------------------------------------------------------

struct TreeNode {
  int32_t feature = -1;  // -1 marks a leaf
  int32_t left = -1;     // child for feature value 0
  int32_t right = -1;    // child for feature value 1
  double value = 0.0;    // leaf payload
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  bool empty() const { return nodes.empty(); }

  double leaf_value(std::span<const uint8_t> x) const {
    int32_t i = 0;
    while (nodes[static_cast<size_t>(i)].feature >= 0) {
      const TreeNode& n = nodes[static_cast<size_t>(i)];
      i = x[static_cast<size_t>(n.feature)] ? n.right : n.left;
    }
    return nodes[static_cast<size_t>(i)].value;
  }
};

namespace detail {

constexpr double kMinGain = 1e-12;
constexpr double kMinHessian = 1e-12;

inline double sigmoid(double m) {
  if (m >= 0.0) return 1.0 / (1.0 + std::exp(-m));
  const double e = std::exp(m);
  return e / (1.0 + e);
}

// log(1 + e^m), stable for large |m|.
inline double softplus(double m) {
  if (m > 0.0) return m + std::log1p(std::exp(-m));
  return std::log1p(std::exp(m));
}

inline double gini_binary(uint64_t n0, uint64_t n1) {
  const double n = static_cast<double>(n0 + n1);
  if (n == 0.0) return 0.0;
  const double p = static_cast<double>(n1) / n;
  return 2.0 * p * (1.0 - p);
}

// Grows one Gini CART tree over data[rows]. Iterates candidate features in
// ascending index order with strict > on gain, so ties resolve to the lowest
// feature index and results do not depend on container iteration order.
class GiniTreeBuilder {
 public:
  GiniTreeBuilder(const BinaryDataset& data, const LearnerConfig& config, Rng& rng)
      : data_(data), config_(config), rng_(rng), feature_pool_(data.features()) {
    std::iota(feature_pool_.begin(), feature_pool_.end(), size_t{0});
    n_candidates_ = data.features();
    if (config.feature_subsample == FeatureSubsample::sqrt_count) {
      n_candidates_ = static_cast<size_t>(
          std::ceil(std::sqrt(static_cast<double>(data.features()))));
      n_candidates_ = std::min(n_candidates_, data.features());
    }
  }

  Tree build(std::vector<size_t>& rows) {
    Tree tree;
    grow(tree, rows, 0, rows.size(), 1);
    return tree;
  }

 private:
  // Returns the node index of the grown subtree.
  int32_t grow(Tree& tree, std::vector<size_t>& rows, size_t begin, size_t end, int depth) {
    uint64_t n1 = 0;
    for (size_t i = begin; i < end; ++i) n1 += data_.label(rows[i]);
    const uint64_t n = end - begin;
    const uint64_t n0 = n - n1;

    auto make_leaf = [&]() {
      tree.nodes.push_back({-1, -1, -1, static_cast<double>(n1) / static_cast<double>(n)});
      return static_cast<int32_t>(tree.nodes.size() - 1);
    };

    const bool depth_capped = config_.max_depth && depth > *config_.max_depth;
    if (n0 == 0 || n1 == 0 || depth_capped ||
        n < 2 * static_cast<uint64_t>(config_.min_samples_leaf)) {
      return make_leaf();
    }

    const double parent_gini = gini_binary(n0, n1);
    draw_candidates();

    double best_gain = kMinGain;
    size_t best_feature = FeatureCatalog::npos;
    for (size_t f : candidates_) {
      uint64_t l0 = 0, l1 = 0;
      for (size_t i = begin; i < end; ++i) {
        const size_t r = rows[i];
        if (data_.cell(r, f) == 0) {
          data_.label(r) ? ++l1 : ++l0;
        }
      }
      const uint64_t nl = l0 + l1;
      const uint64_t nr = n - nl;
      if (nl < static_cast<uint64_t>(config_.min_samples_leaf) ||
          nr < static_cast<uint64_t>(config_.min_samples_leaf)) {
        continue;
      }
      const uint64_t r0 = n0 - l0, r1 = n1 - l1;
      const double child =
          (static_cast<double>(nl) * gini_binary(l0, l1) +
           static_cast<double>(nr) * gini_binary(r0, r1)) /
          static_cast<double>(n);
      const double gain = parent_gini - child;
      if (gain > best_gain) {
        best_gain = gain;
        best_feature = f;
      }
    }
    if (best_feature == FeatureCatalog::npos) return make_leaf();

    auto mid_it = std::stable_partition(
        rows.begin() + static_cast<ptrdiff_t>(begin), rows.begin() + static_cast<ptrdiff_t>(end),
        [&](size_t r) { return data_.cell(r, best_feature) == 0; });
    const size_t mid = static_cast<size_t>(mid_it - rows.begin());

    const size_t self = tree.nodes.size();
    tree.nodes.push_back({static_cast<int32_t>(best_feature), -1, -1, 0.0});
    const int32_t left = grow(tree, rows, begin, mid, depth + 1);
    const int32_t right = grow(tree, rows, mid, end, depth + 1);
    tree.nodes[self].left = left;
    tree.nodes[self].right = right;
    return static_cast<int32_t>(self);
  }

  void draw_candidates() {
    candidates_.clear();
    if (n_candidates_ == data_.features()) {
      candidates_.resize(data_.features());
      std::iota(candidates_.begin(), candidates_.end(), size_t{0});
      return;
    }
    // Partial Fisher-Yates over a persistent pool; any starting permutation
    // yields a uniform sample.
    for (size_t i = 0; i < n_candidates_; ++i) {
      const size_t j = i + rng_.next_below(feature_pool_.size() - i);
      std::swap(feature_pool_[i], feature_pool_[j]);
    }
    candidates_.assign(feature_pool_.begin(),
                       feature_pool_.begin() + static_cast<ptrdiff_t>(n_candidates_));
    std::sort(candidates_.begin(), candidates_.end());
  }

  const BinaryDataset& data_;
  const LearnerConfig& config_;
  Rng& rng_;
  std::vector<size_t> feature_pool_;
  std::vector<size_t> candidates_;
  size_t n_candidates_;
};

}  // namespace detail

// One CART tree (Gini, class-probability leaves) over the given rows. This is
// the forest's unit of work, exposed so single-tree behaviour is testable.
inline Tree train_tree(const BinaryDataset& data, std::vector<size_t> rows,
                       const LearnerConfig& config, uint64_t seed) {
  config.validate();
  if (rows.empty()) fail(Errc::empty_dataset, "train_tree: no rows");
  Rng rng(seed);
  detail::GiniTreeBuilder builder(data, config, rng);
  return builder.build(rows);
}

// ---------------------------------------------------------------------------
// Ensemble model
// ---------------------------------------------------------------------------

struct TreeEnsembleModel {
  LearnerKind kind = LearnerKind::random_forest;
  std::vector<Tree> trees;
  FeatureCatalog catalog;
  double base_score = 0.0;  // gbdt log-odds prior; 0 for forest
  LearnerConfig config;
  uint64_t train_seed = 0;

  size_t features() const { return catalog.size(); }

  void check_width(size_t got) const {
    if (got != catalog.size()) {
      fail(Errc::width_mismatch, "instance has " + std::to_string(got) + " features, model wants " +
                                     std::to_string(catalog.size()));
    }
  }

  // Raw ensemble output: forest -> mean leaf probability (already in [0,1]);
  // gbdt -> base_score + sum of leaf values (log-odds). This is the space the
  // Shapley game is played in.
  double margin(std::span<const uint8_t> x) const {
    check_width(x.size());
    double sum = 0.0;
    for (const Tree& t : trees) sum += t.leaf_value(x);
    if (kind == LearnerKind::random_forest) {
      return sum / static_cast<double>(trees.size());
    }
    return base_score + sum;
  }

  double margin_to_proba(double m) const {
    return kind == LearnerKind::random_forest ? m : detail::sigmoid(m);
  }

  double predict_proba(std::span<const uint8_t> x) const { return margin_to_proba(margin(x)); }

  uint8_t predict_label(std::span<const uint8_t> x, double threshold = 0.5) const {
    return predict_proba(x) >= threshold ? 1 : 0;
  }

  std::string describe() const {
    return std::string(learner_kind_name(kind)) + "(trees=" + std::to_string(trees.size()) +
           ",seed=" + std::to_string(train_seed) + ")";
  }
};

// Scores every row; parallel over rows, one output slot per row.
inline std::vector<double> predict_proba(const TreeEnsembleModel& model, const BinaryDataset& data) {
  if (data.catalog() != model.catalog) {
    fail(Errc::width_mismatch, "dataset catalog does not match model catalog; align first");
  }
  std::vector<double> probas(data.rows());
  parallel_for(data.rows(), [&](size_t i) { probas[i] = model.predict_proba(data.row(i)); });
  return probas;
}

inline std::vector<uint8_t> labels_from_probas(const std::vector<double>& probas,
                                               double threshold = 0.5) {
  std::vector<uint8_t> labels(probas.size());
  for (size_t i = 0; i < probas.size(); ++i) labels[i] = probas[i] >= threshold ? 1 : 0;
  return labels;
}

// ---------------------------------------------------------------------------
// Random forest
// ---------------------------------------------------------------------------

inline TreeEnsembleModel train_random_forest(const BinaryDataset& data,
                                             const LearnerConfig& config) {
  config.validate();
  if (config.kind != LearnerKind::random_forest) {
    fail(Errc::config_error, "train_random_forest given non-forest config");
  }
  const size_t ones = data.count_label(1);
  if (ones == 0 || ones == data.rows()) {
    fail(Errc::single_class_dataset, "forest training needs both classes");
  }

  TreeEnsembleModel model;
  model.kind = LearnerKind::random_forest;
  model.catalog = data.catalog();
  model.config = config;
  model.train_seed = config.seed;
  model.trees.resize(static_cast<size_t>(config.n_trees));

  parallel_for(model.trees.size(), [&](size_t t) {
    Rng rng(derive_seed(config.seed, "rf_tree", t));
    std::vector<size_t> rows(data.rows());
    for (size_t i = 0; i < rows.size(); ++i) rows[i] = rng.next_below(data.rows());
    std::sort(rows.begin(), rows.end());
    detail::GiniTreeBuilder builder(data, config, rng);
    model.trees[t] = builder.build(rows);
  });
  return model;
}

// ---------------------------------------------------------------------------
// GBDT
// ---------------------------------------------------------------------------

struct GbdtTrainStats {
  // round_loss[0] is the mean logistic loss at base_score; entry r+1 is the
  // loss after boosting round r.
  std::vector<double> round_loss;
};

namespace detail {

// Grows one Newton tree on (grad, hess). Two-bin "histograms": a single pass
// over the node's rows accumulates the value-0 side per feature; the value-1
// side is the complement.
class NewtonTreeBuilder {
 public:
  NewtonTreeBuilder(const BinaryDataset& data, const LearnerConfig& config,
                    const std::vector<double>& grad, const std::vector<double>& hess)
      : data_(data), config_(config), grad_(grad), hess_(hess) {}

  // leaf_rows receives (first_row_index_range) per created leaf so the caller
  // can update margins without re-routing rows through the tree.
  Tree build(std::vector<size_t>& rows, std::vector<std::pair<size_t, size_t>>& leaf_ranges,
             std::vector<double>& leaf_values) {
    Tree tree;
    grow(tree, rows, 0, rows.size(), 1, leaf_ranges, leaf_values);
    return tree;
  }

 private:
  int32_t grow(Tree& tree, std::vector<size_t>& rows, size_t begin, size_t end, int depth,
               std::vector<std::pair<size_t, size_t>>& leaf_ranges,
               std::vector<double>& leaf_values) {
    double g_sum = 0.0, h_sum = 0.0;
    for (size_t i = begin; i < end; ++i) {
      g_sum += grad_[rows[i]];
      h_sum += hess_[rows[i]];
    }
    const size_t n = end - begin;

    auto make_leaf = [&]() {
      const double value =
          h_sum > kMinHessian ? -config_.learning_rate * g_sum / h_sum : 0.0;
      tree.nodes.push_back({-1, -1, -1, value});
      leaf_ranges.emplace_back(begin, end);
      leaf_values.push_back(value);
      return static_cast<int32_t>(tree.nodes.size() - 1);
    };

    const bool depth_capped = config_.max_depth && depth > *config_.max_depth;
    if (depth_capped || n < 2 * static_cast<size_t>(config_.min_samples_leaf)) {
      return make_leaf();
    }

    const size_t F = data_.features();
    g0_.assign(F, 0.0);
    h0_.assign(F, 0.0);
    c0_.assign(F, 0);
    for (size_t i = begin; i < end; ++i) {
      const size_t r = rows[i];
      const double g = grad_[r];
      const double h = hess_[r];
      auto cells = data_.row(r);
      for (size_t f = 0; f < F; ++f) {
        if (cells[f] == 0) {
          g0_[f] += g;
          h0_[f] += h;
          ++c0_[f];
        }
      }
    }

    auto score = [](double g, double h) { return h > kMinHessian ? g * g / h : 0.0; };
    const double parent_score = score(g_sum, h_sum);

    double best_gain = kMinGain;
    size_t best_feature = FeatureCatalog::npos;
    for (size_t f = 0; f < F; ++f) {
      const size_t nl = c0_[f];
      const size_t nr = n - nl;
      if (nl < static_cast<size_t>(config_.min_samples_leaf) ||
          nr < static_cast<size_t>(config_.min_samples_leaf)) {
        continue;
      }
      const double gain =
          score(g0_[f], h0_[f]) + score(g_sum - g0_[f], h_sum - h0_[f]) - parent_score;
      if (gain > best_gain) {
        best_gain = gain;
        best_feature = f;
      }
    }
    if (best_feature == FeatureCatalog::npos) return make_leaf();

    auto mid_it = std::stable_partition(
        rows.begin() + static_cast<ptrdiff_t>(begin), rows.begin() + static_cast<ptrdiff_t>(end),
        [&](size_t r) { return data_.cell(r, best_feature) == 0; });
    const size_t mid = static_cast<size_t>(mid_it - rows.begin());

    const size_t self = tree.nodes.size();
    tree.nodes.push_back({static_cast<int32_t>(best_feature), -1, -1, 0.0});
    const int32_t left = grow(tree, rows, begin, mid, depth + 1, leaf_ranges, leaf_values);
    const int32_t right = grow(tree, rows, mid, end, depth + 1, leaf_ranges, leaf_values);
    tree.nodes[self].left = left;
    tree.nodes[self].right = right;
    return static_cast<int32_t>(self);
  }

  const BinaryDataset& data_;
  const LearnerConfig& config_;
  const std::vector<double>& grad_;
  const std::vector<double>& hess_;
  // per-node scratch (value-0 bin)
  std::vector<double> g0_, h0_;
  std::vector<size_t> c0_;
};

}  // namespace detail

inline TreeEnsembleModel train_gbdt(const BinaryDataset& data, const LearnerConfig& config,
                                    GbdtTrainStats* stats = nullptr) {
  config.validate();
  if (config.kind != LearnerKind::gbdt) {
    fail(Errc::config_error, "train_gbdt given non-gbdt config");
  }
  const size_t ones = data.count_label(1);
  if (ones == 0 || ones == data.rows()) {
    fail(Errc::single_class_dataset, "gbdt training needs both classes");
  }

  TreeEnsembleModel model;
  model.kind = LearnerKind::gbdt;
  model.catalog = data.catalog();
  model.config = config;
  model.train_seed = config.seed;

  const size_t n = data.rows();
  const double p = static_cast<double>(ones) / static_cast<double>(n);
  model.base_score = std::log(p / (1.0 - p));

  std::vector<double> margin(n, model.base_score);
  std::vector<double> grad(n), hess(n);

  auto mean_loss = [&]() {
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
      total += detail::softplus(margin[i]) -
               static_cast<double>(data.label(i)) * margin[i];
    }
    return total / static_cast<double>(n);
  };
  if (stats) {
    stats->round_loss.clear();
    stats->round_loss.push_back(mean_loss());
  }

  std::vector<size_t> rows(n);
  std::vector<std::pair<size_t, size_t>> leaf_ranges;
  std::vector<double> leaf_values;
  for (int round = 0; round < config.n_trees; ++round) {
    for (size_t i = 0; i < n; ++i) {
      const double pi = detail::sigmoid(margin[i]);
      grad[i] = pi - static_cast<double>(data.label(i));
      hess[i] = pi * (1.0 - pi);
    }
    std::iota(rows.begin(), rows.end(), size_t{0});
    leaf_ranges.clear();
    leaf_values.clear();
    detail::NewtonTreeBuilder builder(data, config, grad, hess);
    model.trees.push_back(builder.build(rows, leaf_ranges, leaf_values));
    for (size_t l = 0; l < leaf_ranges.size(); ++l) {
      for (size_t i = leaf_ranges[l].first; i < leaf_ranges[l].second; ++i) {
        margin[rows[i]] += leaf_values[l];
      }
    }
    if (stats) stats->round_loss.push_back(mean_loss());
  }
  return model;
}

inline TreeEnsembleModel train_model(const BinaryDataset& data, const LearnerConfig& config) {
  return config.kind == LearnerKind::random_forest ? train_random_forest(data, config)
                                                   : train_gbdt(data, config);
}

// ---------------------------------------------------------------------------
// Serialization (bit-exact round trip; doubles use shortest-round-trip form)
// ---------------------------------------------------------------------------

using ojson = nlohmann::ordered_json;

inline ojson to_json(const LearnerConfig& c) {
  ojson j{{"kind", learner_kind_name(c.kind)},
          {"n_trees", c.n_trees},
          {"max_depth", nullptr},
          {"min_samples_leaf", c.min_samples_leaf},
          {"learning_rate", c.learning_rate},
          {"feature_subsample",
           c.feature_subsample == FeatureSubsample::sqrt_count ? "sqrt" : "all"},
          {"seed", c.seed}};
  if (c.max_depth) j["max_depth"] = *c.max_depth;
  return j;
}

inline LearnerConfig learner_config_from_json(const ojson& j) {
  LearnerConfig c;
  c.kind = learner_kind_from_name(j.at("kind").get<std::string>());
  c.n_trees = j.at("n_trees").get<int>();
  if (!j.at("max_depth").is_null()) c.max_depth = j.at("max_depth").get<int>();
  c.min_samples_leaf = j.at("min_samples_leaf").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  const std::string fs = j.at("feature_subsample").get<std::string>();
  if (fs == "sqrt") {
    c.feature_subsample = FeatureSubsample::sqrt_count;
  } else if (fs == "all") {
    c.feature_subsample = FeatureSubsample::all;
  } else {
    fail(Errc::config_error, "unknown feature_subsample rule: '" + fs + "'");
  }
  c.seed = j.at("seed").get<uint64_t>();
  c.validate();
  return c;
}

namespace detail {

inline ojson node_to_json(const Tree& tree, int32_t idx) {
  const TreeNode& n = tree.nodes[static_cast<size_t>(idx)];
  if (n.feature < 0) return ojson{{"value", n.value}};
  return ojson{{"feature", n.feature},
               {"left", node_to_json(tree, n.left)},
               {"right", node_to_json(tree, n.right)}};
}

inline int32_t node_from_json(const ojson& j, Tree& tree, size_t n_features) {
  if (j.contains("value")) {
    tree.nodes.push_back({-1, -1, -1, j.at("value").get<double>()});
    return static_cast<int32_t>(tree.nodes.size() - 1);
  }
  const int32_t feature = j.at("feature").get<int32_t>();
  if (feature < 0 || static_cast<size_t>(feature) >= n_features) {
    fail(Errc::config_error, "tree node references feature out of range");
  }
  const size_t self = tree.nodes.size();
  tree.nodes.push_back({feature, -1, -1, 0.0});
  const int32_t left = node_from_json(j.at("left"), tree, n_features);
  const int32_t right = node_from_json(j.at("right"), tree, n_features);
  tree.nodes[self].left = left;
  tree.nodes[self].right = right;
  return static_cast<int32_t>(self);
}

}  // namespace detail

inline ojson to_json(const TreeEnsembleModel& m) {
  ojson trees = ojson::array();
  for (const Tree& t : m.trees) trees.push_back(detail::node_to_json(t, 0));
  return ojson{{"format", "tree-ensemble-v1"},
               {"kind", learner_kind_name(m.kind)},
               {"base_score", m.base_score},
               {"train_seed", m.train_seed},
               {"config", to_json(m.config)},
               {"catalog", m.catalog.names()},
               {"trees", std::move(trees)}};
}

inline TreeEnsembleModel model_from_json(const ojson& j) {
  if (j.value("format", "") != std::string("tree-ensemble-v1")) {
    fail(Errc::config_error, "not a tree-ensemble-v1 document");
  }
  TreeEnsembleModel m;
  m.kind = learner_kind_from_name(j.at("kind").get<std::string>());
  m.base_score = j.at("base_score").get<double>();
  m.train_seed = j.at("train_seed").get<uint64_t>();
  m.config = learner_config_from_json(j.at("config"));
  m.catalog = FeatureCatalog(j.at("catalog").get<std::vector<std::string>>());
  for (const auto& tj : j.at("trees")) {
    Tree t;
    detail::node_from_json(tj, t, m.catalog.size());
    m.trees.push_back(std::move(t));
  }
  if (m.trees.empty()) fail(Errc::config_error, "model has no trees");
  return m;
}

inline void save_model(const TreeEnsembleModel& m, const std::filesystem::path& path) {
  write_file_atomic(path, to_json(m).dump(2) + "\n");
}

inline TreeEnsembleModel load_model(const std::filesystem::path& path) {
  ojson j = ojson::parse(read_file(path));
  return model_from_json(j);
}

}  // namespace permshift
