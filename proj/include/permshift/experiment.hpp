#pragma once

// End-to-end experiment orchestration: acquire a domain pair (synthetic or
// CSV), split, optionally select features, then run the intra / cross /
// hybrid regimes per learner and emit the attribution artifacts. Every file
// is written atomically; the index is the only artifact carrying a
// timestamp, so reruns are byte-diffable.

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "permshift/common.hpp"
#include "permshift/dataset.hpp"
#include "permshift/learners.hpp"
#include "permshift/metrics.hpp"
#include "permshift/selection.hpp"
#include "permshift/shap.hpp"
#include "permshift/synthgen.hpp"

namespace permshift {

struct SelectionSettings {
  bool domain_a = true;   // the feature-rich domain gets selection by default
  bool domain_b = false;
  double threshold = 1.0;
  size_t step = 1;
};

struct ExplainSettings {
  bool enabled = true;
  size_t top_n = 15;        // violin/waterfall feature budget
  size_t sample_size = 120; // instances explained per summary artifact
};

enum class Regime { intra, cross_a_to_b, cross_b_to_a, hybrid };

inline Regime regime_from_name(const std::string& s) {
  if (s == "intra") return Regime::intra;
  if (s == "cross_a_to_b") return Regime::cross_a_to_b;
  if (s == "cross_b_to_a") return Regime::cross_b_to_a;
  if (s == "hybrid") return Regime::hybrid;
  fail(Errc::config_error, "unknown regime: '" + s + "'");
}

struct ExperimentConfig {
  std::optional<ShiftSpec> synth;
  std::string csv_a, csv_b;  // real-data mode (ignored when synth is set)
  std::string label_column = "label";
  std::string domain_a = "A";
  std::string domain_b = "B";
  std::vector<LearnerConfig> learners;  // empty -> forest + gbdt defaults
  SelectionSettings selection;
  std::vector<Regime> regimes = {Regime::intra, Regime::cross_a_to_b, Regime::cross_b_to_a,
                                 Regime::hybrid};
  size_t cv_folds = 5;
  double test_fraction = 0.2;
  size_t background_size = 100;
  ExplainSettings explain;
  bool eval_on_original_test = false;  // extra hybrid artifacts
  uint64_t seed = 42;

  bool has_regime(Regime r) const {
    for (Regime x : regimes) {
      if (x == r) return true;
    }
    return false;
  }

  void validate() const {
    if (regimes.empty()) fail(Errc::config_error, "regime list is empty");
    if (!synth && (csv_a.empty() || csv_b.empty())) {
      fail(Errc::config_error, "need either a synth spec or both csv_a and csv_b");
    }
    if (synth) synth->validate();
    auto check_name = [](const std::string& n, const char* what) {
      if (n.empty()) fail(Errc::config_error, std::string(what) + " name is empty");
      for (char c : n) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') {
          fail(Errc::config_error,
               std::string(what) + " name '" + n + "' must be [A-Za-z0-9_-]");
        }
      }
    };
    check_name(domain_a, "domain_a");
    check_name(domain_b, "domain_b");
    if (domain_a == domain_b) fail(Errc::config_error, "domain names must differ");
    if (cv_folds < 2) fail(Errc::config_error, "cv_folds must be >= 2");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
      fail(Errc::config_error, "test_fraction must be in (0,1)");
    }
    if (background_size < 1) fail(Errc::config_error, "background_size must be >= 1");
    if (explain.enabled && (explain.top_n < 1 || explain.sample_size < 1)) {
      fail(Errc::config_error, "explain.top_n and explain.sample_size must be >= 1");
    }
    if (!(selection.threshold > 0.0 && selection.threshold <= 1.0)) {
      fail(Errc::config_error, "selection.threshold must be in (0,1]");
    }
    if (selection.step < 1) fail(Errc::config_error, "selection.step must be >= 1");
    for (const LearnerConfig& lc : learners) lc.validate();
  }
};

// ---------------------------------------------------------------------------
// Config JSON
// ---------------------------------------------------------------------------

// Learner entries start from the kind's defaults; every other key is optional.
inline LearnerConfig learner_config_from_partial_json(const ojson& j) {
  const LearnerKind kind = learner_kind_from_name(j.at("kind").get<std::string>());
  LearnerConfig c =
      kind == LearnerKind::random_forest ? random_forest_defaults() : gbdt_defaults();
  if (j.contains("n_trees")) c.n_trees = j.at("n_trees").get<int>();
  if (j.contains("max_depth")) {
    if (j.at("max_depth").is_null()) {
      c.max_depth.reset();
    } else {
      c.max_depth = j.at("max_depth").get<int>();
    }
  }
  if (j.contains("min_samples_leaf")) c.min_samples_leaf = j.at("min_samples_leaf").get<int>();
  if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("feature_subsample")) {
    const std::string fs = j.at("feature_subsample").get<std::string>();
    if (fs == "sqrt") {
      c.feature_subsample = FeatureSubsample::sqrt_count;
    } else if (fs == "all") {
      c.feature_subsample = FeatureSubsample::all;
    } else {
      fail(Errc::config_error, "unknown feature_subsample rule: '" + fs + "'");
    }
  }
  c.validate();
  return c;
}

inline ExperimentConfig experiment_config_from_json(const ojson& j) {
  ExperimentConfig c;
  if (j.contains("synth")) c.synth = shift_spec_from_json(j.at("synth"));
  if (j.contains("csv_a")) c.csv_a = j.at("csv_a").get<std::string>();
  if (j.contains("csv_b")) c.csv_b = j.at("csv_b").get<std::string>();
  if (j.contains("label_column")) c.label_column = j.at("label_column").get<std::string>();
  if (j.contains("domain_a")) c.domain_a = j.at("domain_a").get<std::string>();
  if (j.contains("domain_b")) c.domain_b = j.at("domain_b").get<std::string>();
  if (j.contains("learners")) {
    for (const auto& lj : j.at("learners")) {
      c.learners.push_back(learner_config_from_partial_json(lj));
    }
  }
  if (j.contains("selection")) {
    const auto& s = j.at("selection");
    if (s.contains("domain_a")) c.selection.domain_a = s.at("domain_a").get<bool>();
    if (s.contains("domain_b")) c.selection.domain_b = s.at("domain_b").get<bool>();
    if (s.contains("threshold")) c.selection.threshold = s.at("threshold").get<double>();
    if (s.contains("step")) c.selection.step = s.at("step").get<size_t>();
  }
  if (j.contains("regimes")) {
    c.regimes.clear();
    for (const auto& r : j.at("regimes")) c.regimes.push_back(regime_from_name(r.get<std::string>()));
  }
  if (j.contains("cv_folds")) c.cv_folds = j.at("cv_folds").get<size_t>();
  if (j.contains("test_fraction")) c.test_fraction = j.at("test_fraction").get<double>();
  if (j.contains("background_size")) c.background_size = j.at("background_size").get<size_t>();
  if (j.contains("explain")) {
    const auto& e = j.at("explain");
    if (e.contains("enabled")) c.explain.enabled = e.at("enabled").get<bool>();
    if (e.contains("top_n")) c.explain.top_n = e.at("top_n").get<size_t>();
    if (e.contains("sample_size")) c.explain.sample_size = e.at("sample_size").get<size_t>();
  }
  if (j.contains("eval_on_original_test")) {
    c.eval_on_original_test = j.at("eval_on_original_test").get<bool>();
  }
  if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
  if (c.learners.empty()) {
    c.learners = {random_forest_defaults(), gbdt_defaults()};
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

namespace detail {

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline BinaryDataset sample_rows(const BinaryDataset& data, size_t size, uint64_t seed) {
  if (size >= data.rows()) return data;
  return sample_background(data, size, seed).rows;
}

inline ojson sorted_id_array(const std::vector<uint64_t>& ids) {
  std::vector<uint64_t> sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  return ojson(sorted);
}

struct Aggregate {
  double mean = 0.0;
  double stdev = 0.0;  // sample std (n-1); 0 when n < 2
};

inline Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  if (values.empty()) return a;
  for (double v : values) a.mean += v;
  a.mean /= static_cast<double>(values.size());
  if (values.size() < 2) return a;
  double ss = 0.0;
  for (double v : values) ss += (v - a.mean) * (v - a.mean);
  a.stdev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return a;
}

}  // namespace detail

class ExperimentRunner {
 public:
  ExperimentRunner(ExperimentConfig config, std::filesystem::path out_dir)
      : config_(std::move(config)), out_(std::move(out_dir)) {
    config_.validate();
  }

  // Runs every configured regime plus the explain stage and writes the index.
  void run() {
    prepare_domains();
    train_intra_models();
    if (config_.has_regime(Regime::intra)) emit_intra_reports();
    if (config_.has_regime(Regime::cross_a_to_b)) emit_cross_reports(0, 1);
    if (config_.has_regime(Regime::cross_b_to_a)) emit_cross_reports(1, 0);
    if (config_.has_regime(Regime::hybrid)) run_hybrid();
    if (config_.explain.enabled) run_explain();
    write_index();
  }

  const ExperimentConfig& config() const { return config_; }

 private:
  struct Domain {
    std::string name;
    BinaryDataset full;
    BinaryDataset train;
    BinaryDataset test;
  };

  struct Fitted {
    TreeEnsembleModel model;
    BinaryDataset train_used;  // projected training rows the model saw
    std::optional<SelectionResult> selection;
  };

  // ---- stages ----

  void prepare_domains() {
    BinaryDataset raw_a, raw_b;
    if (config_.synth) {
      auto [a, b] = generate_domain_pair(*config_.synth);
      raw_a = std::move(a);
      raw_b = std::move(b);
      save_csv(raw_a, out_ / "data" / (config_.domain_a + ".csv"), config_.label_column);
      save_csv(raw_b, out_ / "data" / (config_.domain_b + ".csv"), config_.label_column);
      write_artifact("data/" + config_.domain_a + ".csv");
      write_artifact("data/" + config_.domain_b + ".csv");
      write_file_atomic(out_ / "data" / (config_.domain_a + ".features"), raw_a.catalog().to_text());
      write_file_atomic(out_ / "data" / (config_.domain_b + ".features"), raw_b.catalog().to_text());
      write_artifact("data/" + config_.domain_a + ".features");
      write_artifact("data/" + config_.domain_b + ".features");
    } else {
      raw_a = load_csv(config_.csv_a, config_.label_column);
      raw_b = load_csv(config_.csv_b, config_.label_column);
    }
    // Globally unique row ids: domain B's ids live in a disjoint block.
    domains_[0] = {config_.domain_a, raw_a.with_tag(config_.domain_a), {}, {}};
    domains_[1] = {config_.domain_b,
                   raw_b.with_tag(config_.domain_b).with_id_offset(kDomainIdStride), {}, {}};
    for (int d = 0; d < 2; ++d) {
      SplitPair split = stratified_split(domains_[d].full, config_.test_fraction,
                                         derive_seed(config_.seed, "split", d));
      domains_[d].train = std::move(split.train);
      domains_[d].test = std::move(split.test);
    }
  }

  bool selection_enabled(int d) const {
    return d == 0 ? config_.selection.domain_a : config_.selection.domain_b;
  }

  void train_intra_models() {
    fitted_.assign(2, std::vector<Fitted>(config_.learners.size()));
    for (int d = 0; d < 2; ++d) {
      for (size_t l = 0; l < config_.learners.size(); ++l) {
        LearnerConfig lc = config_.learners[l];
        lc.seed = derive_seed(config_.seed, "train_intra", static_cast<uint64_t>(d), l);
        Fitted fitted;
        if (selection_enabled(d)) {
          LearnerConfig sc = lc;
          sc.seed = derive_seed(config_.seed, "train_select", static_cast<uint64_t>(d), l);
          SelectionResult sel =
              select_minimal_topk(domains_[d].train, domains_[d].test, sc,
                                  config_.selection.threshold, config_.selection.step);
          const std::string sel_path =
              "selection/" + domains_[d].name + "_" + learner_label(l) + ".json";
          write_json(sel_path, to_json(sel));
          fitted.train_used = project_to_catalog(domains_[d].train, sel.selected);
          fitted.selection = std::move(sel);
        } else {
          fitted.train_used = domains_[d].train;
        }
        fitted.model = train_model(fitted.train_used, lc);
        const std::string model_path =
            "models/intra_" + domains_[d].name + "_" + learner_label(l) + ".json";
        write_json(model_path, to_json(fitted.model));
        fitted_[static_cast<size_t>(d)][l] = std::move(fitted);
      }
    }
  }

  void emit_intra_reports() {
    for (int d = 0; d < 2; ++d) {
      for (size_t l = 0; l < config_.learners.size(); ++l) {
        const Fitted& f = fitted_[static_cast<size_t>(d)][l];
        EvalReport rep = score(f.model, domains_[d].test, "intra", domains_[d].name,
                               domains_[d].name);
        ojson j = to_json(rep);
        j["audit"] = audit_block({{domains_[d].name, &f.train_used}},
                                 {{domains_[d].name, &domains_[d].test}});
        write_json("reports/intra_" + domains_[d].name + "_" + learner_label(l) + ".json", j);
      }
    }
  }

  void emit_cross_reports(int src, int dst) {
    for (size_t l = 0; l < config_.learners.size(); ++l) {
      const Fitted& f = fitted_[static_cast<size_t>(src)][l];
      EvalReport rep = score(f.model, domains_[dst].test, "cross", domains_[src].name,
                             domains_[dst].name);
      ojson j = to_json(rep);
      j["audit"] = audit_block({{domains_[src].name, &f.train_used}},
                               {{domains_[dst].name, &domains_[dst].test}});
      write_json("reports/cross_" + domains_[src].name + "_to_" + domains_[dst].name + "_" +
                     learner_label(l) + ".json",
                 j);
    }
  }

  void run_hybrid() {
    const BinaryDataset merged =
        merge_common(domains_[0].train, domains_[1].train, derive_seed(config_.seed, "hybrid_merge"),
                     domains_[0].name, domains_[1].name);
    const std::vector<size_t> fold_of = stratified_fold_assignment(
        merged, config_.cv_folds, derive_seed(config_.seed, "hybrid_folds"));

    for (size_t l = 0; l < config_.learners.size(); ++l) {
      // fold_reports[d][fold], fold mode; orig_reports likewise for the
      // alternate evaluation on the untouched 20% splits.
      std::vector<std::vector<EvalReport>> fold_reports(2), orig_reports(2);
      std::vector<ojson> fold_test_ids;

      for (size_t fold = 0; fold < config_.cv_folds; ++fold) {
        std::vector<size_t> train_rows, test_rows;
        for (size_t i = 0; i < merged.rows(); ++i) {
          (fold_of[i] == fold ? test_rows : train_rows).push_back(i);
        }
        BinaryDataset fold_train = merged.take(train_rows);
        BinaryDataset fold_test = merged.take(test_rows);

        LearnerConfig lc = config_.learners[l];
        lc.seed = derive_seed(config_.seed, "train_hybrid", fold, l);
        TreeEnsembleModel model = train_model(fold_train, lc);

        ojson per_domain_ids = ojson::object();
        for (int d = 0; d < 2; ++d) {
          std::vector<size_t> domain_rows;
          for (size_t i = 0; i < fold_test.rows(); ++i) {
            if (fold_test.tags()[i] == domains_[d].name) domain_rows.push_back(i);
          }
          if (domain_rows.empty()) {
            fail(Errc::insufficient_class_rows,
                 "hybrid fold " + std::to_string(fold) + " holds no rows of domain " +
                     domains_[d].name);
          }
          BinaryDataset slice = fold_test.take(domain_rows);
          fold_reports[d].push_back(score(model, slice, "hybrid",
                                          domains_[0].name + "+" + domains_[1].name,
                                          domains_[d].name));
          per_domain_ids[domains_[d].name] = detail::sorted_id_array(slice.row_ids());

          if (config_.eval_on_original_test) {
            BinaryDataset orig = align_to_catalog(domains_[d].test, model.catalog);
            orig_reports[d].push_back(score(model, orig, "hybrid",
                                            domains_[0].name + "+" + domains_[1].name,
                                            domains_[d].name));
          }
        }
        fold_test_ids.push_back(std::move(per_domain_ids));
      }

      for (int d = 0; d < 2; ++d) {
        ojson j = hybrid_report_json(fold_reports[static_cast<size_t>(d)], merged.features());
        ojson audit = ojson::object();
        audit["merged_train_rows"] =
            ojson{{domains_[0].name, detail::sorted_id_array(domains_[0].train.row_ids())},
                  {domains_[1].name, detail::sorted_id_array(domains_[1].train.row_ids())}};
        ojson folds = ojson::array();
        for (const auto& ids : fold_test_ids) folds.push_back(ojson{{"test_rows", ids}});
        audit["folds"] = std::move(folds);
        j["audit"] = std::move(audit);
        write_json("reports/hybrid_" + domains_[d].name + "_" + learner_label(l) + ".json", j);

        if (config_.eval_on_original_test) {
          ojson jo = hybrid_report_json(orig_reports[static_cast<size_t>(d)], merged.features());
          jo["evaluation"] = "original_test_split";
          write_json("reports/hybrid_origtest_" + domains_[d].name + "_" + learner_label(l) +
                         ".json",
                     jo);
        }
      }
    }
  }

  void run_explain() {
    const size_t forest_idx = find_learner(LearnerKind::random_forest);
    const size_t gbdt_idx = find_learner(LearnerKind::gbdt);

    // Global violin: forest model of domain A on its own test split (§IV.D
    // style summary on the feature-rich domain).
    if (forest_idx != kNoLearner) {
      const Fitted& f = fitted_[0][forest_idx];
      BackgroundSet bg = sample_background(f.train_used, config_.background_size,
                                           derive_seed(config_.seed, "background", 0, forest_idx));
      BinaryDataset sample = detail::sample_rows(align_to_catalog(domains_[0].test, f.model.catalog),
                                                 config_.explain.sample_size,
                                                 derive_seed(config_.seed, "explain_sample", 0));
      GlobalImportance gi = global_importance(f.model, sample, bg, config_.explain.top_n);
      write_text("explain/violin_" + domains_[0].name + "_" + learner_label(forest_idx) + ".csv",
                 violin_csv(gi));

      // Importance shift: domain B's forest model explained at home vs on
      // domain A's test rows (the compact domain transferred outward).
      const Fitted& fb = fitted_[1][forest_idx];
      BackgroundSet bg_b = sample_background(fb.train_used, config_.background_size,
                                             derive_seed(config_.seed, "background", 1, forest_idx));
      BinaryDataset intra_sample =
          detail::sample_rows(align_to_catalog(domains_[1].test, fb.model.catalog),
                              config_.explain.sample_size,
                              derive_seed(config_.seed, "explain_sample", 1));
      BinaryDataset cross_sample =
          detail::sample_rows(align_to_catalog(domains_[0].test, fb.model.catalog),
                              config_.explain.sample_size,
                              derive_seed(config_.seed, "explain_sample", 2));
      ImportanceShift shift = importance_shift(fb.model, intra_sample, cross_sample, bg_b);
      write_text("explain/shift_" + domains_[1].name + "_" + learner_label(forest_idx) + ".csv",
                 shift_csv(shift));
    }

    // Local waterfalls: gbdt model of domain A, one instance per confusion
    // archetype from its own test split.
    if (gbdt_idx != kNoLearner) {
      const Fitted& f = fitted_[0][gbdt_idx];
      BinaryDataset test = align_to_catalog(domains_[0].test, f.model.catalog);
      std::vector<double> probas = predict_proba(f.model, test);
      std::vector<uint8_t> preds = labels_from_probas(probas);
      BackgroundSet bg = sample_background(f.train_used, config_.background_size,
                                           derive_seed(config_.seed, "background", 0, gbdt_idx));
      TreeShapExplainer explainer(f.model, bg);

      struct Archetype {
        const char* name;
        uint8_t label, pred;
      };
      const Archetype archetypes[] = {
          {"tp", 1, 1}, {"tn", 0, 0}, {"fp", 0, 1}, {"fn", 1, 0}};
      for (const Archetype& arch : archetypes) {
        size_t found = test.rows();
        for (size_t i = 0; i < test.rows(); ++i) {
          if (test.label(i) == arch.label && preds[i] == arch.pred) {
            found = i;
            break;
          }
        }
        if (found == test.rows()) {
          archetypes_unavailable_.push_back(arch.name);
          continue;
        }
        ShapAttribution attr = explainer.explain(test.row(found), test.row_ids()[found]);
        Waterfall w = waterfall(attr, f.model.catalog, config_.explain.top_n);
        write_json("explain/waterfall_" + domains_[0].name + "_" + learner_label(gbdt_idx) + "_" +
                       arch.name + ".json",
                   to_json(w));
      }
    }
  }

  void write_index() {
    std::sort(artifacts_.begin(), artifacts_.end());
    ojson j{{"generated_at", detail::utc_timestamp()},
            {"seed", config_.seed},
            {"domains", ojson::array({config_.domain_a, config_.domain_b})},
            {"artifacts", artifacts_},
            {"archetypes_unavailable", archetypes_unavailable_}};
    write_file_atomic(out_ / "index.json", j.dump(2) + "\n");
  }

  // ---- helpers ----

  static constexpr uint64_t kDomainIdStride = 1000000000ULL;
  static constexpr size_t kNoLearner = static_cast<size_t>(-1);

  size_t find_learner(LearnerKind kind) const {
    for (size_t l = 0; l < config_.learners.size(); ++l) {
      if (config_.learners[l].kind == kind) return l;
    }
    return kNoLearner;
  }

  // "random_forest", or "random_forest_2" when the kind appears repeatedly.
  std::string learner_label(size_t idx) const {
    const LearnerKind kind = config_.learners[idx].kind;
    size_t nth = 0, total = 0;
    for (size_t l = 0; l < config_.learners.size(); ++l) {
      if (config_.learners[l].kind != kind) continue;
      ++total;
      if (l < idx) ++nth;
    }
    std::string label = learner_kind_name(kind);
    if (total > 1) label += "_" + std::to_string(nth + 1);
    return label;
  }

  EvalReport score(const TreeEnsembleModel& model, const BinaryDataset& test,
                   const std::string& regime, const std::string& train_domain,
                   const std::string& test_domain) const {
    BinaryDataset aligned = align_to_catalog(test, model.catalog);
    std::vector<double> probas = predict_proba(model, aligned);
    std::vector<uint8_t> preds = labels_from_probas(probas);
    EvalReport rep = classification_report(preds, aligned.labels());
    rep.auc = try_roc_auc(probas, aligned.labels());
    if (!rep.auc) rep.degenerate = true;
    rep.regime = regime;
    rep.train_domain = train_domain;
    rep.test_domain = test_domain;
    rep.model_kind = learner_kind_name(model.kind);
    rep.k_features = model.features();
    return rep;
  }

  static ojson audit_block(const std::vector<std::pair<std::string, const BinaryDataset*>>& train,
                           const std::vector<std::pair<std::string, const BinaryDataset*>>& test) {
    ojson train_j = ojson::object(), test_j = ojson::object();
    for (const auto& [name, data] : train) train_j[name] = detail::sorted_id_array(data->row_ids());
    for (const auto& [name, data] : test) test_j[name] = detail::sorted_id_array(data->row_ids());
    return ojson{{"train_rows", std::move(train_j)}, {"test_rows", std::move(test_j)}};
  }

  ojson hybrid_report_json(const std::vector<EvalReport>& folds, size_t k_features) const {
    internal_check(!folds.empty(), "hybrid aggregation over zero folds");
    auto collect = [&](auto&& get) {
      std::vector<double> v;
      v.reserve(folds.size());
      for (const EvalReport& r : folds) v.push_back(get(r));
      return detail::aggregate(v);
    };
    auto block = [&](bool stdev) {
      auto pick = [&](detail::Aggregate a) { return stdev ? a.stdev : a.mean; };
      ojson b{{"accuracy", pick(collect([](const EvalReport& r) { return r.accuracy; }))},
              {"auc", nullptr}};
      bool all_auc = true;
      for (const EvalReport& r : folds) all_auc = all_auc && r.auc.has_value();
      if (all_auc) {
        b["auc"] = pick(collect([](const EvalReport& r) { return *r.auc; }));
      }
      for (const char* cls : {"benign", "malware"}) {
        auto member = [&](const EvalReport& r) -> const ClassMetrics& {
          return std::string_view(cls) == "benign" ? r.benign : r.malware;
        };
        b[cls] = ojson{
            {"precision", pick(collect([&](const EvalReport& r) { return member(r).precision; }))},
            {"recall", pick(collect([&](const EvalReport& r) { return member(r).recall; }))},
            {"f1", pick(collect([&](const EvalReport& r) { return member(r).f1; }))}};
      }
      return b;
    };

    ojson folds_j = ojson::array();
    for (size_t i = 0; i < folds.size(); ++i) {
      ojson fj = to_json(folds[i]);
      fj["fold"] = i;
      folds_j.push_back(std::move(fj));
    }
    return ojson{{"regime", "hybrid"},
                 {"train_domain", folds.front().train_domain},
                 {"test_domain", folds.front().test_domain},
                 {"model_kind", folds.front().model_kind},
                 {"k_features", k_features},
                 {"cv_folds", folds.size()},
                 {"mean", block(false)},
                 {"std", block(true)},
                 {"folds", std::move(folds_j)}};
  }

  void write_json(const std::string& rel, const ojson& j) {
    write_file_atomic(out_ / rel, j.dump(2) + "\n");
    write_artifact(rel);
  }

  void write_text(const std::string& rel, const std::string& text) {
    write_file_atomic(out_ / rel, text);
    write_artifact(rel);
  }

  void write_artifact(const std::string& rel) { artifacts_.push_back(rel); }

  ExperimentConfig config_;
  std::filesystem::path out_;
  Domain domains_[2];
  std::vector<std::vector<Fitted>> fitted_;  // [domain][learner]
  std::vector<std::string> artifacts_;
  std::vector<std::string> archetypes_unavailable_;
};

}  // namespace permshift
