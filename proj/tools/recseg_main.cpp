// recseg: command-line front end for corpus generation, preprocessing,
// recursive training and evaluation.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "recseg/config.hpp"
#include "recseg/errors.hpp"
#include "recseg/harness.hpp"
#include "recseg/metrics.hpp"
#include "recseg/volume_io.hpp"

namespace fs = std::filesystem;
using namespace recseg;

namespace {

struct Shared {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
  bool quiet = false;
};

void add_shared(CLI::App* cmd, Shared& s) {
  cmd->add_option("--config", s.config, "Experiment config file (key = value lines)");
  cmd->add_option("--seed", s.seed, "Base seed (overrides the config)");
  cmd->add_option("--out", s.out, "Output directory (overrides the config)");
  cmd->add_option("--set", s.overrides, "Extra config setting key=value (repeatable)");
  cmd->add_flag("--quiet", s.quiet, "Suppress progress output");
}

ExperimentConfig resolve(const Shared& s) {
  ExperimentConfig cfg = s.config.empty() ? ExperimentConfig{} : ExperimentConfig::load(s.config);
  for (const auto& kv : s.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw FormatError("--set", "expected key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (s.seed) cfg.seed = *s.seed;
  if (!s.out.empty()) cfg.out = s.out;
  cfg.validate();
  return cfg;
}

std::optional<std::vector<SubjectRecord>> maybe_corpus(const std::string& manifest) {
  if (manifest.empty()) return std::nullopt;
  return read_subjects(manifest);
}

// A .csv argument is a manifest of subjects; anything else a single label header.
std::vector<std::pair<std::string, LabelMap>> load_label_set(const std::string& path, bool prefer_clean) {
  std::vector<std::pair<std::string, LabelMap>> out;
  if (fs::path(path).extension() == ".csv") {
    for (auto& s : read_subjects(path)) {
      out.emplace_back(s.subject_id, prefer_clean && s.clean_label ? *s.clean_label : s.label);
    }
  } else {
    out.emplace_back(fs::path(path).stem().string(), read_labels(path));
  }
  return out;
}

int report_error(const std::string& kind, const std::string& field, const std::string& message, int code) {
  std::cerr << "error kind=" << kind;
  if (!field.empty()) std::cerr << " field=" << field;
  std::cerr << " message=\"" << message << "\"\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recursive self-training for 3D humerus/scapula segmentation on synthetic shoulder phantoms"};
  app.require_subcommand(1);

  // synth
  Shared synth_s;
  int synth_n = 20;
  std::uint64_t synth_seed = 1;
  double corrupt_frac = 0.2, jitter_mm = 2.0, slice_drop = 0.0;
  std::string synth_dir;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic phantom corpus");
  synth->alias("synthgen");
  synth->add_option("--n", synth_n, "Number of subjects")->capture_default_str();
  synth->add_option("--corpus-seed", synth_seed, "Corpus seed")->capture_default_str();
  synth->add_option("--corrupt-frac", corrupt_frac, "Fraction of subjects with corrupted labels")->capture_default_str();
  synth->add_option("--jitter-mm", jitter_mm, "Surface jitter of corrupted labels (mm)")->capture_default_str();
  synth->add_option("--slice-drop", slice_drop, "Per-slice label dropout probability")->capture_default_str();
  synth->add_option("--out-dir", synth_dir, "Directory for volumes and manifest.csv");
  add_shared(synth, synth_s);

  // preprocess
  Shared pre_s;
  std::string pre_in, pre_dir;
  auto* pre = app.add_subcommand("preprocess", "Resample, crop/pad, bias-correct and normalize a corpus");
  pre->add_option("--input", pre_in, "Input manifest.csv")->required();
  pre->add_option("--out-dir", pre_dir, "Directory for the preprocessed corpus");
  add_shared(pre, pre_s);

  // train
  Shared train_s;
  int train_fold = 0;
  std::string train_corpus;
  auto* train = app.add_subcommand("train", "Run the recursive plan with one fold held out");
  train->add_option("--fold", train_fold, "Held-out fold (0-based)")->capture_default_str();
  train->add_option("--corpus", train_corpus, "Raw corpus manifest (default: generate from config)");
  add_shared(train, train_s);

  // crossval
  Shared cv_s;
  std::string cv_corpus;
  auto* cv = app.add_subcommand("crossval", "Five-fold cross-validation of the recursive plan");
  cv->add_option("--corpus", cv_corpus, "Raw corpus manifest (default: generate from config)");
  add_shared(cv, cv_s);

  // sizestudy
  Shared ss_s;
  std::string ss_corpus;
  auto* ss = app.add_subcommand("sizestudy", "Recursive plan at several dataset sizes (80/20 split)");
  ss->add_option("--corpus", ss_corpus, "Raw corpus manifest (default: generate from config)");
  add_shared(ss, ss_s);

  // evaluate
  Shared ev_s;
  std::string ev_pred, ev_truth, ev_csv;
  bool ev_no_post = false, ev_stored = false;
  auto* ev = app.add_subcommand("evaluate", "Score predicted labels against reference labels");
  ev->add_option("--pred", ev_pred, "Predicted label header (.vol) or manifest (.csv)")->required();
  ev->add_option("--truth", ev_truth, "Reference label header (.vol) or manifest (.csv)")->required();
  ev->add_option("--csv", ev_csv, "Write metrics CSV here");
  ev->add_flag("--no-postprocess", ev_no_post, "Skip largest-component filtering of predictions");
  ev->add_flag("--stored-labels", ev_stored, "Score against stored labels even when clean labels exist");
  add_shared(ev, ev_s);

  // report
  Shared rep_s;
  std::string rep_csv;
  auto* rep = app.add_subcommand("report", "Summarize a metrics CSV as a table and relative improvements");
  rep->add_option("--metrics", rep_csv, "metrics.csv from crossval, sizestudy or train")->required();
  add_shared(rep, rep_s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return report_error("usage", "", e.what(), 2);
  }

  try {
    if (synth->parsed()) {
      ExperimentConfig cfg = resolve(synth_s);
      if (!synth->count("--n") && !synth_s.config.empty()) synth_n = cfg.corpus_n;
      CorruptionSpec c{corrupt_frac, jitter_mm, slice_drop};
      const fs::path dir = synth_dir.empty() ? cfg.out / "corpus" : fs::path(synth_dir);
      const auto subjects = generate_corpus(synth_n, synth_s.seed ? *synth_s.seed : synth_seed, c);
      write_subjects(subjects, dir);
      std::cout << "wrote " << subjects.size() << " subjects to " << (dir / "manifest.csv").string() << '\n';
    } else if (pre->parsed()) {
      ExperimentConfig cfg = resolve(pre_s);
      const fs::path dir = pre_dir.empty() ? cfg.out / "preprocessed" : fs::path(pre_dir);
      auto subjects = read_subjects(pre_in);
      for (auto& s : subjects) s = preprocess_subject(s, cfg.preprocess);
      write_subjects(subjects, dir);
      std::cout << "wrote " << subjects.size() << " subjects to " << (dir / "manifest.csv").string() << '\n';
    } else if (train->parsed()) {
      ExperimentConfig cfg = resolve(train_s);
      std::ostream* log = train_s.quiet ? nullptr : &std::cerr;
      auto subjects = prepare_corpus(cfg, maybe_corpus(train_corpus));
      assign_folds(subjects, cfg.folds, fold_seed(cfg));
      const fs::path dir = cfg.out / "train" / ("fold_" + std::to_string(train_fold));
      fs::create_directories(dir);
      cfg.save(dir / "plan.resolved.config");
      RunContext ctx{dir, "G" + std::to_string(train_fold + 1), log};
      MetricsReport report;
      if (cfg.plan.network.parameter_dtype == net::Dtype::kF64) {
        report = collect_validation(run_plan<double>(subjects, train_fold, cfg.plan, cfg.seed, ctx));
      } else {
        report = collect_validation(run_plan<float>(subjects, train_fold, cfg.plan, cfg.seed, ctx));
      }
      write_metrics_csv(report, dir / "metrics.csv");
      std::cout << metrics_markdown(report, "");
    } else if (cv->parsed()) {
      ExperimentConfig cfg = resolve(cv_s);
      auto r = run_crossval(cfg, cv_s.quiet ? nullptr : &std::cerr, maybe_corpus(cv_corpus));
      std::cout << r.markdown;
      if (cfg.plan.num_rounds > 1) std::cout << format_improvement(report_improvement(r.report));
    } else if (ss->parsed()) {
      ExperimentConfig cfg = resolve(ss_s);
      auto r = run_size_study(cfg, ss_s.quiet ? nullptr : &std::cerr, maybe_corpus(ss_corpus));
      std::cout << r.markdown;
      if (cfg.plan.num_rounds > 1) std::cout << format_improvement(report_improvement(r.report));
    } else if (ev->parsed()) {
      const auto preds = load_label_set(ev_pred, false);
      const auto truths = load_label_set(ev_truth, !ev_stored);
      MetricsReport report;
      for (const auto& [id, pred] : preds) {
        const LabelMap* truth = nullptr;
        for (const auto& [tid, t] : truths) {
          if (tid == id || truths.size() == 1) truth = &t;
        }
        if (!truth) throw IntegrityError("no reference label for subject " + id);
        report.add("eval", id, 0, evaluate(pred, *truth, !ev_no_post));
      }
      if (!ev_csv.empty()) write_metrics_csv(report, ev_csv);
      std::cout << metrics_csv(report);
    } else if (rep->parsed()) {
      const auto report = read_metrics_csv(rep_csv);
      std::cout << metrics_markdown(report, "");
      const auto rounds = report.rounds();
      if (!rounds.empty() && rounds.front() == 0 && rounds.back() > 0) {
        std::cout << format_improvement(report_improvement(report));
      }
    }
  } catch (const FormatError& e) {
    return report_error("format", e.field(), e.what(), 3);
  } catch (const IntegrityError& e) {
    return report_error("integrity", "", e.what(), 4);
  } catch (const ArgumentError& e) {
    return report_error("argument", "", e.what(), 5);
  } catch (const std::exception& e) {
    return report_error("runtime", "", e.what(), 1);
  }
  return 0;
}
