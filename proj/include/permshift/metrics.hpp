#pragma once

// Classification metrics. All ratios are stored in [0, 1]; rendering as
// percentages is a display concern (see format_percent). roc_auc is exact:
// tie-corrected rank sums are accumulated as integers (2x the half-step), so
// the result equals the brute-force pair count with a single final division.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "permshift/common.hpp"

namespace permshift {

struct ConfusionMatrix {
  uint64_t tp = 0;  // label 1 predicted 1
  uint64_t fp = 0;  // label 0 predicted 1
  uint64_t tn = 0;  // label 0 predicted 0
  uint64_t fn = 0;  // label 1 predicted 0

  uint64_t total() const { return tp + fp + tn + fn; }
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  uint64_t support = 0;
};

struct EvalReport {
  std::string regime;        // "intra", "cross", "hybrid"
  std::string train_domain;
  std::string test_domain;
  std::string model_kind;    // "random_forest" | "gbdt"
  uint64_t k_features = 0;
  ConfusionMatrix confusion;
  ClassMetrics benign;   // class 0
  ClassMetrics malware;  // class 1
  double accuracy = 0.0;
  std::optional<double> auc;  // absent when scores unavailable or labels single-class
  bool degenerate = false;    // some ratio had a 0/0 denominator
};

inline ConfusionMatrix confusion_matrix(std::span<const uint8_t> predictions,
                                        std::span<const uint8_t> labels) {
  if (predictions.size() != labels.size()) {
    fail(Errc::length_mismatch, "predictions vs labels length mismatch");
  }
  if (predictions.empty()) fail(Errc::too_few_samples, "no predictions to score");
  ConfusionMatrix cm;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      (predictions[i] == 1 ? cm.tp : cm.fn)++;
    } else {
      (predictions[i] == 1 ? cm.fp : cm.tn)++;
    }
  }
  return cm;
}

// Precision/recall/F1 per class plus accuracy. 0/0 ratios are reported as 0
// and set the degenerate flag rather than throwing; single-class test sets are
// a legitimate outcome of slicing.
inline EvalReport classification_report(const ConfusionMatrix& cm_in) {
  if (cm_in.total() == 0) fail(Errc::too_few_samples, "empty confusion matrix");
  EvalReport rep;
  rep.confusion = cm_in;
  const ConfusionMatrix& cm = rep.confusion;

  auto ratio = [&rep](uint64_t num, uint64_t den) {
    if (den == 0) {
      rep.degenerate = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };

  // Class 1 (malware): positive = predicted 1.
  rep.malware.precision = ratio(cm.tp, cm.tp + cm.fp);
  rep.malware.recall = ratio(cm.tp, cm.tp + cm.fn);
  rep.malware.support = cm.tp + cm.fn;
  // Class 0 (benign): positive = predicted 0.
  rep.benign.precision = ratio(cm.tn, cm.tn + cm.fn);
  rep.benign.recall = ratio(cm.tn, cm.tn + cm.fp);
  rep.benign.support = cm.tn + cm.fp;

  auto f1 = [&rep](double p, double r) {
    if (p + r == 0.0) {
      rep.degenerate = true;
      return 0.0;
    }
    return 2.0 * p * r / (p + r);
  };
  rep.malware.f1 = f1(rep.malware.precision, rep.malware.recall);
  rep.benign.f1 = f1(rep.benign.precision, rep.benign.recall);

  rep.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  return rep;
}

inline EvalReport classification_report(std::span<const uint8_t> predictions,
                                        std::span<const uint8_t> labels) {
  return classification_report(confusion_matrix(predictions, labels));
}

// Area under the ROC curve via the rank-sum identity
//   AUC = (R+ - n+(n+ + 1)/2) / (n+ n-)
// where R+ is the sum of average ranks of the positives. Ties get the average
// rank of their block. Ranks are accumulated doubled (2x) so everything stays
// integral until the final division; the result is bit-identical to counting
// concordant pairs (ties at 1/2) and dividing once.
inline double roc_auc(std::span<const double> scores, std::span<const uint8_t> labels) {
  if (scores.size() != labels.size()) {
    fail(Errc::length_mismatch, "scores vs labels length mismatch");
  }
  if (scores.empty()) fail(Errc::too_few_samples, "no scores to rank");
  uint64_t n_pos = 0;
  for (uint8_t l : labels) n_pos += l;
  const uint64_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    fail(Errc::single_class_labels, "AUC undefined: labels contain a single class");
  }

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // double_rank_sum accumulates sum over positives of (2 * average rank).
  // A tie block occupying ranks [lo, hi] (1-based) has average rank
  // (lo + hi) / 2, so its doubled value lo + hi is integral.
  uint64_t double_rank_sum = 0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const uint64_t doubled_avg_rank = static_cast<uint64_t>(i + 1) + static_cast<uint64_t>(j + 1);
    for (size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) double_rank_sum += doubled_avg_rank;
    }
    i = j + 1;
  }
  // AUC = (2*R+ - n+(n+ + 1)) / (2 n+ n-), all integers until here.
  const uint64_t numerator = double_rank_sum - n_pos * (n_pos + 1);
  return static_cast<double>(numerator) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// As roc_auc but reporting single-class label sets as absent instead of
// throwing; evaluation slices may legitimately be one-sided.
inline std::optional<double> try_roc_auc(std::span<const double> scores,
                                         std::span<const uint8_t> labels) {
  uint64_t n_pos = 0;
  for (uint8_t l : labels) n_pos += l;
  if (n_pos == 0 || n_pos == labels.size()) return std::nullopt;
  return roc_auc(scores, labels);
}

// "93.42" style rendering of a [0,1] ratio; display only.
inline std::string format_percent(double ratio) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", ratio * 100.0);
  return buf;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

using ojson = nlohmann::ordered_json;

inline ojson to_json(const ConfusionMatrix& cm) {
  return ojson{{"tp", cm.tp}, {"fp", cm.fp}, {"tn", cm.tn}, {"fn", cm.fn}};
}

inline ConfusionMatrix confusion_from_json(const ojson& j) {
  ConfusionMatrix cm;
  cm.tp = j.at("tp").get<uint64_t>();
  cm.fp = j.at("fp").get<uint64_t>();
  cm.tn = j.at("tn").get<uint64_t>();
  cm.fn = j.at("fn").get<uint64_t>();
  return cm;
}

inline ojson to_json(const ClassMetrics& m) {
  return ojson{
      {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
}

inline ClassMetrics class_metrics_from_json(const ojson& j) {
  ClassMetrics m;
  m.precision = j.at("precision").get<double>();
  m.recall = j.at("recall").get<double>();
  m.f1 = j.at("f1").get<double>();
  m.support = j.at("support").get<uint64_t>();
  return m;
}

inline ojson to_json(const EvalReport& r) {
  ojson j{{"regime", r.regime},
          {"train_domain", r.train_domain},
          {"test_domain", r.test_domain},
          {"model_kind", r.model_kind},
          {"k_features", r.k_features},
          {"accuracy", r.accuracy},
          {"auc", nullptr},
          {"benign", to_json(r.benign)},
          {"malware", to_json(r.malware)},
          {"confusion", to_json(r.confusion)},
          {"degenerate", r.degenerate}};
  if (r.auc) j["auc"] = *r.auc;
  return j;
}

inline EvalReport eval_report_from_json(const ojson& j) {
  EvalReport r;
  r.regime = j.at("regime").get<std::string>();
  r.train_domain = j.at("train_domain").get<std::string>();
  r.test_domain = j.at("test_domain").get<std::string>();
  r.model_kind = j.at("model_kind").get<std::string>();
  r.k_features = j.at("k_features").get<uint64_t>();
  r.accuracy = j.at("accuracy").get<double>();
  if (!j.at("auc").is_null()) r.auc = j.at("auc").get<double>();
  r.benign = class_metrics_from_json(j.at("benign"));
  r.malware = class_metrics_from_json(j.at("malware"));
  r.confusion = confusion_from_json(j.at("confusion"));
  r.degenerate = j.at("degenerate").get<bool>();
  return r;
}

}  // namespace permshift
