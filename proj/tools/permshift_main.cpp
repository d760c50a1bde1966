// Command-line front end for the cross-domain evaluation lab.
//
// Subcommands mirror the pipeline stages; `report` runs everything end to
// end from one experiment config. Exit codes: 0 success, 2 configuration
// error, 3 data error, 4 internal invariant violation.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "permshift/permshift.hpp"

namespace {

using namespace permshift;
namespace fs = std::filesystem;

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::config_error:
    case Errc::invalid_spec:
    case Errc::too_many_features_for_exact:
      return kExitConfig;
    case Errc::internal:
      return kExitInternal;
    default:
      return kExitData;
  }
}

struct GlobalOpts {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::string out_dir = "out";
  int threads = 0;
};

ojson load_json_file(const std::string& path) {
  try {
    return ojson::parse(read_file(path));
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(Errc::config_error, "cannot parse JSON from " + path + ": " + e.what());
  }
}

// The experiment config is optional for most subcommands; when present it
// supplies defaults (label column, learner settings, seed).
ExperimentConfig load_experiment_config(const GlobalOpts& g, bool required) {
  ExperimentConfig cfg;
  if (!g.config_path.empty()) {
    cfg = experiment_config_from_json(load_json_file(g.config_path));
  } else if (required) {
    fail(Errc::config_error, "this subcommand needs --config <json>");
  } else {
    cfg.learners = {random_forest_defaults(), gbdt_defaults()};
  }
  if (g.seed) cfg.seed = *g.seed;
  return cfg;
}

LearnerConfig pick_learner(const ExperimentConfig& cfg, const std::string& kind_name,
                           uint64_t seed) {
  const LearnerKind kind = learner_kind_from_name(kind_name);
  for (const LearnerConfig& lc : cfg.learners) {
    if (lc.kind == kind) {
      LearnerConfig out = lc;
      out.seed = seed;
      return out;
    }
  }
  LearnerConfig out = kind == LearnerKind::random_forest ? random_forest_defaults() : gbdt_defaults();
  out.seed = seed;
  return out;
}

EvalReport score_model(const TreeEnsembleModel& model, const BinaryDataset& test,
                       const std::string& regime, const std::string& train_domain,
                       const std::string& test_domain) {
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

void print_report_summary(const EvalReport& rep) {
  std::cout << rep.regime << " " << rep.train_domain << "->" << rep.test_domain << " ["
            << rep.model_kind << ", k=" << rep.k_features
            << "] accuracy=" << format_percent(rep.accuracy) << "%";
  if (rep.auc) std::cout << " auc=" << fmt_double(*rep.auc);
  std::cout << "\n";
}

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

void cmd_gen_synth(const GlobalOpts& g, const std::string& name_a, const std::string& name_b) {
  ShiftSpec spec;
  if (!g.config_path.empty()) {
    ojson j = load_json_file(g.config_path);
    spec = j.contains("synth") ? shift_spec_from_json(j.at("synth")) : shift_spec_from_json(j);
  } else {
    spec = default_shift_spec();
  }
  if (g.seed) spec.seed = *g.seed;
  spec.validate();
  auto [a, b] = generate_domain_pair(spec);
  const fs::path out(g.out_dir);
  save_csv(a, out / (name_a + ".csv"));
  save_csv(b, out / (name_b + ".csv"));
  write_file_atomic(out / (name_a + ".features"), a.catalog().to_text());
  write_file_atomic(out / (name_b + ".features"), b.catalog().to_text());
  std::cout << "wrote " << (out / (name_a + ".csv")).string() << " (" << a.rows() << " rows, "
            << a.features() << " features)\n";
  std::cout << "wrote " << (out / (name_b + ".csv")).string() << " (" << b.rows() << " rows, "
            << b.features() << " features)\n";
}

void cmd_select(const GlobalOpts& g, const std::string& train_path, const std::string& holdout_path,
                const std::string& label, const std::string& learner, double threshold,
                size_t step) {
  ExperimentConfig cfg = load_experiment_config(g, false);
  BinaryDataset train = load_csv(train_path, label);
  BinaryDataset holdout = load_csv(holdout_path, label);
  LearnerConfig lc = pick_learner(cfg, learner, derive_seed(cfg.seed, "train_select", 0, 0));
  SelectionResult sel = select_minimal_topk(train, holdout, lc, threshold, step);
  const fs::path out(g.out_dir);
  write_file_atomic(out / "selection.json", to_json(sel).dump(2) + "\n");
  write_file_atomic(out / "selected.features", sel.selected.to_text());
  std::cout << "k=" << sel.k << " achieved=" << format_percent(sel.achieved_accuracy)
            << "% full=" << format_percent(sel.full_feature_accuracy) << "%\n";
  std::cout << "wrote " << (out / "selection.json").string() << "\n";
}

void cmd_train(const GlobalOpts& g, const std::string& train_path, const std::string& label,
               const std::string& learner, const std::string& features_path) {
  ExperimentConfig cfg = load_experiment_config(g, false);
  BinaryDataset train = load_csv(train_path, label);
  if (!features_path.empty()) {
    FeatureCatalog keep = FeatureCatalog::from_text(read_file(features_path));
    train = project_to_catalog(train, keep);
  }
  LearnerConfig lc = pick_learner(cfg, learner, derive_seed(cfg.seed, "train_cli", 0, 0));
  TreeEnsembleModel model = train_model(train, lc);
  const fs::path out(g.out_dir);
  save_model(model, out / "model.json");
  std::cout << "trained " << model.describe() << " on " << train.rows() << " rows, "
            << train.features() << " features\n";
  std::cout << "wrote " << (out / "model.json").string() << "\n";
}

void cmd_eval(const GlobalOpts& g, const std::string& model_path, const std::string& test_path,
              const std::string& label, const std::string& regime,
              const std::string& train_domain, const std::string& test_domain,
              const std::string& out_name) {
  BinaryDataset test = load_csv(test_path, label);
  TreeEnsembleModel model = load_model(model_path);
  EvalReport rep = score_model(model, test, regime, train_domain, test_domain);
  const fs::path out(g.out_dir);
  write_file_atomic(out / out_name, to_json(rep).dump(2) + "\n");
  print_report_summary(rep);
  std::cout << "wrote " << (out / out_name).string() << "\n";
}

void cmd_hybrid(const GlobalOpts& g, const std::string& train_a_path,
                const std::string& train_b_path, const std::string& label,
                const std::string& learner, size_t folds, const std::string& name_a,
                const std::string& name_b) {
  ExperimentConfig cfg = load_experiment_config(g, false);
  BinaryDataset train_a = load_csv(train_a_path, label).with_tag(name_a);
  BinaryDataset train_b = load_csv(train_b_path, label).with_tag(name_b).with_id_offset(1000000000ULL);
  BinaryDataset merged =
      merge_common(train_a, train_b, derive_seed(cfg.seed, "hybrid_merge"), name_a, name_b);
  std::vector<size_t> fold_of =
      stratified_fold_assignment(merged, folds, derive_seed(cfg.seed, "hybrid_folds"));
  LearnerConfig base = pick_learner(cfg, learner, 0);

  std::vector<std::vector<EvalReport>> reports(2);
  for (size_t fold = 0; fold < folds; ++fold) {
    std::vector<size_t> train_rows, test_rows;
    for (size_t i = 0; i < merged.rows(); ++i) {
      (fold_of[i] == fold ? test_rows : train_rows).push_back(i);
    }
    LearnerConfig lc = base;
    lc.seed = derive_seed(cfg.seed, "train_hybrid", fold, 0);
    TreeEnsembleModel model = train_model(merged.take(train_rows), lc);
    BinaryDataset fold_test = merged.take(test_rows);
    const std::string names[2] = {name_a, name_b};
    for (int d = 0; d < 2; ++d) {
      std::vector<size_t> rows;
      for (size_t i = 0; i < fold_test.rows(); ++i) {
        if (fold_test.tags()[i] == names[d]) rows.push_back(i);
      }
      if (rows.empty()) {
        fail(Errc::insufficient_class_rows,
             "fold " + std::to_string(fold) + " holds no rows of domain " + names[d]);
      }
      reports[static_cast<size_t>(d)].push_back(score_model(
          model, fold_test.take(rows), "hybrid", name_a + "+" + name_b, names[d]));
    }
  }

  const fs::path out(g.out_dir);
  const std::string names[2] = {name_a, name_b};
  for (int d = 0; d < 2; ++d) {
    double mean = 0.0;
    for (const EvalReport& r : reports[static_cast<size_t>(d)]) mean += r.accuracy;
    mean /= static_cast<double>(folds);
    ojson folds_j = ojson::array();
    for (size_t i = 0; i < reports[static_cast<size_t>(d)].size(); ++i) {
      ojson fj = to_json(reports[static_cast<size_t>(d)][i]);
      fj["fold"] = i;
      folds_j.push_back(std::move(fj));
    }
    ojson j{{"regime", "hybrid"},
            {"test_domain", names[d]},
            {"model_kind", base.kind == LearnerKind::random_forest ? "random_forest" : "gbdt"},
            {"cv_folds", folds},
            {"mean_accuracy", mean},
            {"folds", std::move(folds_j)}};
    const std::string file = "hybrid_" + names[d] + ".json";
    write_file_atomic(out / file, j.dump(2) + "\n");
    std::cout << "hybrid " << names[d] << " mean accuracy=" << format_percent(mean) << "%\n";
  }
}

void cmd_explain(const GlobalOpts& g, const std::string& model_path, const std::string& test_path,
                 const std::string& background_path, const std::string& cross_path,
                 const std::string& label, const std::string& mode, size_t top_n,
                 size_t sample_size) {
  ExperimentConfig cfg = load_experiment_config(g, false);
  TreeEnsembleModel model = load_model(model_path);
  BinaryDataset test = align_to_catalog(load_csv(test_path, label), model.catalog);
  if (background_path.empty()) {
    fail(Errc::config_error, "--background <csv> is required (model training data)");
  }
  BinaryDataset bg_data = align_to_catalog(load_csv(background_path, label), model.catalog);
  BackgroundSet bg = sample_background(bg_data, cfg.background_size,
                                       derive_seed(cfg.seed, "background", 0, 0));
  const fs::path out(g.out_dir);

  if (sample_size > 0 && sample_size < test.rows()) {
    test = sample_background(test, sample_size, derive_seed(cfg.seed, "explain_sample", 0)).rows;
  }

  if (mode == "violin") {
    GlobalImportance gi = global_importance(model, test, bg, top_n);
    write_file_atomic(out / "violin.csv", violin_csv(gi));
    std::cout << "wrote " << (out / "violin.csv").string() << " (" << gi.points.size()
              << " points)\n";
  } else if (mode == "shift") {
    if (cross_path.empty()) fail(Errc::config_error, "shift mode needs --cross-test <csv>");
    BinaryDataset cross = align_to_catalog(load_csv(cross_path, label), model.catalog);
    if (sample_size > 0 && sample_size < cross.rows()) {
      cross = sample_background(cross, sample_size, derive_seed(cfg.seed, "explain_sample", 1)).rows;
    }
    ImportanceShift shift = importance_shift(model, test, cross, bg);
    write_file_atomic(out / "shift.csv", shift_csv(shift));
    std::cout << "wrote " << (out / "shift.csv").string() << "\n";
  } else if (mode == "waterfall") {
    std::vector<double> probas = predict_proba(model, test);
    std::vector<uint8_t> preds = labels_from_probas(probas);
    TreeShapExplainer explainer(model, bg);
    struct Archetype {
      const char* name;
      uint8_t label, pred;
    };
    const Archetype archetypes[] = {{"tp", 1, 1}, {"tn", 0, 0}, {"fp", 0, 1}, {"fn", 1, 0}};
    for (const Archetype& arch : archetypes) {
      size_t found = test.rows();
      for (size_t i = 0; i < test.rows(); ++i) {
        if (test.label(i) == arch.label && preds[i] == arch.pred) {
          found = i;
          break;
        }
      }
      if (found == test.rows()) {
        std::cout << "archetype " << arch.name << ": unavailable\n";
        continue;
      }
      ShapAttribution attr = explainer.explain(test.row(found), test.row_ids()[found]);
      Waterfall w = waterfall(attr, model.catalog, top_n);
      const std::string file = std::string("waterfall_") + arch.name + ".json";
      write_file_atomic(out / file, to_json(w).dump(2) + "\n");
      std::cout << "wrote " << (out / file).string() << "\n";
    }
  } else {
    fail(Errc::config_error, "unknown explain mode: '" + mode + "'");
  }
}

void cmd_report(const GlobalOpts& g) {
  ExperimentConfig cfg = load_experiment_config(g, true);
  ExperimentRunner runner(std::move(cfg), fs::path(g.out_dir));
  runner.run();
  std::cout << "experiment complete; index at " << (fs::path(g.out_dir) / "index.json").string()
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-domain evaluation lab for binary-feature malware classifiers"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "Experiment config JSON")->envname("PERMSHIFT_CONFIG");
  uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Master seed override");
  app.add_option("--out", g.out_dir, "Output directory");
  app.add_option("--threads", g.threads, "Worker thread cap (0 = hardware)");

  // gen-synth
  auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic domain pair as CSV");
  gen->fallthrough();
  std::string gen_name_a = "domain_a", gen_name_b = "domain_b";
  gen->add_option("--name-a", gen_name_a, "Base name for domain A files");
  gen->add_option("--name-b", gen_name_b, "Base name for domain B files");

  // select
  auto* sel = app.add_subcommand("select", "Minimal top-k feature selection");
  sel->fallthrough();
  std::string sel_train, sel_holdout, sel_label = "label", sel_learner = "random_forest";
  double sel_threshold = 1.0;
  size_t sel_step = 1;
  sel->add_option("--train", sel_train, "Training CSV")->required();
  sel->add_option("--holdout", sel_holdout, "Holdout CSV")->required();
  sel->add_option("--label", sel_label, "Label column name");
  sel->add_option("--learner", sel_learner, "random_forest | gbdt");
  sel->add_option("--threshold", sel_threshold, "Fraction of full-feature accuracy to reach");
  sel->add_option("--step", sel_step, "k increment");

  // train
  auto* trn = app.add_subcommand("train", "Train one model on a CSV");
  trn->fallthrough();
  std::string trn_train, trn_label = "label", trn_learner = "random_forest", trn_features;
  trn->add_option("--train", trn_train, "Training CSV")->required();
  trn->add_option("--label", trn_label, "Label column name");
  trn->add_option("--learner", trn_learner, "random_forest | gbdt");
  trn->add_option("--features", trn_features, "Optional catalog file restricting features");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a model on a CSV (aligned to its catalog)");
  ev->fallthrough();
  std::string ev_model, ev_test, ev_label = "label", ev_regime = "intra";
  std::string ev_train_domain = "train", ev_test_domain = "test";
  ev->add_option("--model", ev_model, "Model JSON")->required();
  ev->add_option("--test", ev_test, "Test CSV")->required();
  ev->add_option("--label", ev_label, "Label column name");
  ev->add_option("--regime", ev_regime, "Report regime tag");
  ev->add_option("--train-domain", ev_train_domain, "Report train-domain tag");
  ev->add_option("--test-domain", ev_test_domain, "Report test-domain tag");

  // cross-eval
  auto* cev = app.add_subcommand("cross-eval", "Evaluate a model across domains (zero-fill alignment)");
  cev->fallthrough();
  std::string cev_model, cev_test, cev_label = "label";
  std::string cev_train_domain = "source", cev_test_domain = "target";
  cev->add_option("--model", cev_model, "Model JSON")->required();
  cev->add_option("--test", cev_test, "Target-domain CSV")->required();
  cev->add_option("--label", cev_label, "Label column name");
  cev->add_option("--train-domain", cev_train_domain, "Source domain tag");
  cev->add_option("--test-domain", cev_test_domain, "Target domain tag");

  // hybrid
  auto* hyb = app.add_subcommand("hybrid", "Merge two training sets on common features and cross-validate");
  hyb->fallthrough();
  std::string hyb_a, hyb_b, hyb_label = "label", hyb_learner = "random_forest";
  std::string hyb_name_a = "A", hyb_name_b = "B";
  size_t hyb_folds = 5;
  hyb->add_option("--train-a", hyb_a, "Domain A training CSV")->required();
  hyb->add_option("--train-b", hyb_b, "Domain B training CSV")->required();
  hyb->add_option("--label", hyb_label, "Label column name");
  hyb->add_option("--learner", hyb_learner, "random_forest | gbdt");
  hyb->add_option("--folds", hyb_folds, "CV folds");
  hyb->add_option("--name-a", hyb_name_a, "Domain A tag");
  hyb->add_option("--name-b", hyb_name_b, "Domain B tag");

  // explain
  auto* exp = app.add_subcommand("explain", "Shapley attribution artifacts for a model");
  exp->fallthrough();
  std::string exp_model, exp_test, exp_bg, exp_cross, exp_label = "label", exp_mode = "violin";
  size_t exp_top_n = 15, exp_sample = 120;
  exp->add_option("--model", exp_model, "Model JSON")->required();
  exp->add_option("--test", exp_test, "Instances to explain (CSV)")->required();
  exp->add_option("--background", exp_bg, "Background CSV (typically the training data)");
  exp->add_option("--cross-test", exp_cross, "Second test CSV (shift mode)");
  exp->add_option("--label", exp_label, "Label column name");
  exp->add_option("--mode", exp_mode, "violin | shift | waterfall");
  exp->add_option("--top-n", exp_top_n, "Feature budget for violin/waterfall");
  exp->add_option("--sample", exp_sample, "Instances sampled per artifact (0 = all)");

  // report
  auto* rep = app.add_subcommand("report", "Run the full experiment from --config");
  rep->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // CLI11 prints help itself for -h; other parse failures are config errors.
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  if (*seed_opt) g.seed = seed_value;
  set_max_threads(g.threads);

  try {
    if (gen->parsed()) {
      cmd_gen_synth(g, gen_name_a, gen_name_b);
    } else if (sel->parsed()) {
      cmd_select(g, sel_train, sel_holdout, sel_label, sel_learner, sel_threshold, sel_step);
    } else if (trn->parsed()) {
      cmd_train(g, trn_train, trn_label, trn_learner, trn_features);
    } else if (ev->parsed()) {
      cmd_eval(g, ev_model, ev_test, ev_label, ev_regime, ev_train_domain, ev_test_domain,
               "report.json");
    } else if (cev->parsed()) {
      cmd_eval(g, cev_model, cev_test, cev_label, "cross", cev_train_domain, cev_test_domain,
               "cross_report.json");
    } else if (hyb->parsed()) {
      cmd_hybrid(g, hyb_a, hyb_b, hyb_label, hyb_learner, hyb_folds, hyb_name_a, hyb_name_b);
    } else if (exp->parsed()) {
      cmd_explain(g, exp_model, exp_test, exp_bg, exp_cross, exp_label, exp_mode, exp_top_n,
                  exp_sample);
    } else if (rep->parsed()) {
      cmd_report(g);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return 0;
}
