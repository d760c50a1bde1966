#pragma once

// Minimal top-k feature selection: rank features by |r| against the label on
// the training rows only, then find the smallest k whose holdout accuracy
// reaches threshold x full-feature accuracy, retraining at each candidate k.

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "permshift/correlation.hpp"
#include "permshift/dataset.hpp"
#include "permshift/learners.hpp"
#include "permshift/metrics.hpp"

namespace permshift {

struct SelectionResult {
  FeatureCatalog selected;  // top-k prefix of the ranking
  size_t k = 0;
  double full_feature_accuracy = 0.0;
  double achieved_accuracy = 0.0;
  std::vector<std::pair<size_t, double>> trace;  // (k, holdout accuracy), ascending k
};

namespace detail {

inline double holdout_accuracy(const TreeEnsembleModel& model, const BinaryDataset& holdout) {
  BinaryDataset aligned = align_to_catalog(holdout, model.catalog);
  std::vector<double> probas = predict_proba(model, aligned);
  std::vector<uint8_t> preds = labels_from_probas(probas);
  ConfusionMatrix cm = confusion_matrix(preds, aligned.labels());
  return static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
}

}  // namespace detail

// The k = |catalog| evaluation reuses the full-feature model rather than
// retraining on a ranking-permuted catalog: the feature set is identical, and
// reuse guarantees the fallback always meets any threshold <= 1.
inline SelectionResult select_minimal_topk(const BinaryDataset& train,
                                           const BinaryDataset& holdout,
                                           const LearnerConfig& trainer, double threshold = 1.0,
                                           size_t step = 1) {
  if (train.catalog() != holdout.catalog()) {
    fail(Errc::width_mismatch, "train and holdout catalogs differ");
  }
  if (step == 0) fail(Errc::config_error, "selection step must be >= 1");
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    fail(Errc::config_error, "selection threshold must be in (0, 1]");
  }

  const size_t total = train.features();
  TreeEnsembleModel full_model = train_model(train, trainer);
  const double full_acc = detail::holdout_accuracy(full_model, holdout);
  const double target = threshold * full_acc;

  CorrelationRanking ranking = rank_features(train);

  SelectionResult result;
  result.full_feature_accuracy = full_acc;

  // 1e-12 slack: "accuracy >= threshold * full" should not fail on the last
  // ulp when threshold == 1 and the candidate reproduces full accuracy.
  constexpr double kEps = 1e-12;
  for (size_t k = step; k < total; k += step) {
    std::vector<std::string> names;
    names.reserve(k);
    for (size_t i = 0; i < k; ++i) names.push_back(ranking.entries[i].name);
    FeatureCatalog topk(std::move(names));

    BinaryDataset train_k = project_to_catalog(train, topk);
    TreeEnsembleModel model_k = train_model(train_k, trainer);
    const double acc = detail::holdout_accuracy(model_k, holdout);
    result.trace.emplace_back(k, acc);
    if (acc + kEps >= target) {
      result.selected = std::move(topk);
      result.k = k;
      result.achieved_accuracy = acc;
      result.trace.emplace_back(total, full_acc);
      return result;
    }
  }

  // Fallback: the whole catalog, as the ranking-ordered prefix of length total.
  std::vector<std::string> names;
  names.reserve(total);
  for (const auto& e : ranking.entries) names.push_back(e.name);
  result.selected = FeatureCatalog(std::move(names));
  result.k = total;
  result.achieved_accuracy = full_acc;
  result.trace.emplace_back(total, full_acc);
  return result;
}

inline ojson to_json(const SelectionResult& r) {
  ojson trace = ojson::array();
  for (const auto& [k, acc] : r.trace) trace.push_back(ojson{{"k", k}, {"accuracy", acc}});
  return ojson{{"k", r.k},
               {"selected", r.selected.names()},
               {"full_feature_accuracy", r.full_feature_accuracy},
               {"achieved_accuracy", r.achieved_accuracy},
               {"trace", std::move(trace)}};
}

inline SelectionResult selection_from_json(const ojson& j) {
  SelectionResult r;
  r.k = j.at("k").get<size_t>();
  r.selected = FeatureCatalog(j.at("selected").get<std::vector<std::string>>());
  r.full_feature_accuracy = j.at("full_feature_accuracy").get<double>();
  r.achieved_accuracy = j.at("achieved_accuracy").get<double>();
  for (const auto& e : j.at("trace")) {
    r.trace.emplace_back(e.at("k").get<size_t>(), e.at("accuracy").get<double>());
  }
  return r;
}

}  // namespace permshift
