#include "recseg/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "recseg/errors.hpp"
#include "recseg/random.hpp"

namespace recseg {
namespace fs = std::filesystem;

namespace {

enum SeedTag : std::uint64_t { kTagFolds = 0x464f4c44, kTagRun = 0x52554e, kTagSize = 0x53495a45 };

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IntegrityError("cannot write " + path.string());
  out << text;
}

// Rethrows the active exception as the same error kind with `prefix` prepended.
[[noreturn]] void rethrow_with_context(const std::string& prefix) {
  try {
    throw;
  } catch (const FormatError& e) {
    const std::string what = e.what();
    throw FormatError(e.field(), prefix + what.substr(std::min(what.size(), e.field().size() + 2)));
  } catch (const IntegrityError& e) {
    throw IntegrityError(prefix + e.what());
  } catch (const ArgumentError& e) {
    throw ArgumentError(prefix + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(prefix + e.what());
  }
}

// Refuses to resume into a directory produced by a different configuration.
void claim_directory(const fs::path& dir, const ExperimentConfig& cfg) {
  const fs::path resolved = dir / "plan.resolved.config";
  if (fs::exists(resolved)) {
    ExperimentConfig previous = ExperimentConfig::load(resolved);
    previous.out = cfg.out;
    if (!(previous == cfg)) {
      throw ArgumentError("run directory " + dir.string() +
                          " holds results of a different configuration; choose another --out");
    }
  }
  cfg.save(resolved);
}

template <typename T>
MetricsReport run_one(const std::vector<SubjectRecord>& train, const std::vector<SubjectRecord>& validation,
                      const ExperimentConfig& cfg, std::uint64_t seed, const RunContext& ctx) {
  return collect_validation(run_split<T>(train, validation, cfg.plan, seed, ctx));
}

MetricsReport run_dispatch(const std::vector<SubjectRecord>& train, const std::vector<SubjectRecord>& validation,
                           const ExperimentConfig& cfg, std::uint64_t seed, const RunContext& ctx) {
  if (cfg.plan.network.parameter_dtype == net::Dtype::kF64) return run_one<double>(train, validation, cfg, seed, ctx);
  return run_one<float>(train, validation, cfg, seed, ctx);
}

StudyResult finish(const ExperimentConfig& cfg, const fs::path& dir, MetricsReport report) {
  StudyResult r;
  r.dir = dir;
  r.report = std::move(report);
  r.markdown = metrics_markdown(r.report, "");
  write_metrics_csv(r.report, dir / "metrics.csv");
  write_text(dir / "table.md", r.markdown);
  if (cfg.plan.num_rounds > 1) write_text(dir / "improvement.txt", format_improvement(report_improvement(r.report)));
  return r;
}

}  // namespace

std::vector<int> split_folds(std::size_t n, int k, std::uint64_t seed) {
  if (k < 1) throw ArgumentError("split_folds: k must be >= 1");
  if (n < static_cast<std::size_t>(k)) {
    throw ArgumentError("split_folds: " + std::to_string(n) + " subjects cannot fill " + std::to_string(k) + " folds");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<int> fold(n);
  for (std::size_t i = 0; i < n; ++i) fold[order[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  return fold;
}

void assign_folds(std::vector<SubjectRecord>& subjects, int k, std::uint64_t seed) {
  const auto f = split_folds(subjects.size(), k, seed);
  for (std::size_t i = 0; i < subjects.size(); ++i) subjects[i].fold = f[i];
}

std::uint64_t fold_seed(const ExperimentConfig& cfg) { return derive_seed(cfg.seed, {kTagFolds}); }

std::vector<SubjectRecord> prepare_corpus(const ExperimentConfig& cfg, std::optional<std::vector<SubjectRecord>> raw) {
  std::vector<SubjectRecord> subjects =
      raw ? std::move(*raw) : generate_corpus(cfg.corpus_n, cfg.corpus_seed, cfg.corruption);
  for (auto& s : subjects) s = preprocess_subject(s, cfg.preprocess);
  return subjects;
}

StudyResult run_crossval(const ExperimentConfig& cfg, std::ostream* log, std::optional<std::vector<SubjectRecord>> corpus) {
  cfg.validate();
  const fs::path dir = cfg.out / "crossval";
  fs::create_directories(dir);
  claim_directory(dir, cfg);

  std::vector<SubjectRecord> subjects = prepare_corpus(cfg, std::move(corpus));
  assign_folds(subjects, cfg.folds, fold_seed(cfg));

  MetricsReport report;
  for (int g = 0; g < cfg.folds; ++g) {
    std::vector<SubjectRecord> train, validation;
    for (const auto& s : subjects) (s.fold == g ? validation : train).push_back(s);
    RunContext ctx;
    ctx.run_dir = dir / ("fold_" + std::to_string(g + 1));
    ctx.group = "G" + std::to_string(g + 1);
    ctx.log = log;
    try {
      report.append(run_dispatch(train, validation, cfg, derive_seed(cfg.seed, {kTagRun, std::uint64_t(g)}), ctx));
    } catch (const std::exception&) {
      rethrow_with_context("fold " + ctx.group + ": ");
    }
  }
  return finish(cfg, dir, std::move(report));
}

StudyResult run_size_study(const ExperimentConfig& cfg, std::ostream* log,
                           std::optional<std::vector<SubjectRecord>> corpus) {
  cfg.validate();
  const fs::path dir = cfg.out / "sizestudy";
  std::vector<SubjectRecord> subjects = prepare_corpus(cfg, std::move(corpus));
  for (int n : cfg.size_study_sizes) {
    if (static_cast<std::size_t>(n) > subjects.size()) {
      throw ArgumentError("size study: size " + std::to_string(n) + " exceeds corpus of " +
                          std::to_string(subjects.size()));
    }
  }
  fs::create_directories(dir);
  claim_directory(dir, cfg);

  MetricsReport report;
  for (int n : cfg.size_study_sizes) {
    std::vector<std::size_t> order(subjects.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.seed, {kTagSize, std::uint64_t(n)}));
    rng.shuffle(order);
    const auto n_val = static_cast<std::size_t>(std::llround(0.2 * n));
    std::vector<SubjectRecord> train, validation;
    for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
      (i < n_val ? validation : train).push_back(subjects[order[i]]);
    }
    RunContext ctx;
    ctx.run_dir = dir / ("size_" + std::to_string(n));
    ctx.group = "n=" + std::to_string(n);
    ctx.log = log;
    try {
      report.append(run_dispatch(train, validation, cfg, derive_seed(cfg.seed, {kTagSize, kTagRun, std::uint64_t(n)}),
                                 ctx));
    } catch (const std::exception&) {
      rethrow_with_context("size " + std::to_string(n) + ": ");
    }
  }
  return finish(cfg, dir, std::move(report));
}

const Improvement& ImprovementSummary::find(const std::string& group, MetricClass c) const {
  for (const auto& e : entries) {
    if (e.group == group && e.cls == c) return e;
  }
  throw ArgumentError("no improvement entry for " + group + "/" + to_string(c));
}

ImprovementSummary report_improvement(const MetricsReport& report) {
  const auto rounds = report.rounds();
  if (rounds.empty() || rounds.front() != 0 || rounds.back() == 0) {
    throw ArgumentError("report_improvement: report needs round 0 and at least one later round");
  }
  ImprovementSummary s;
  s.first_round = 0;
  s.final_round = rounds.back();

  auto make = [&](const std::string& group, MetricClass c, double first, double final_dsc) {
    Improvement e{group, c, first, final_dsc, 0.0, false};
    e.relative = first > 0.0 ? (final_dsc - first) / first : std::numeric_limits<double>::quiet_NaN();
    e.regression = final_dsc < first;
    return e;
  };

  const auto groups = report.groups();
  for (auto c : kMetricClasses) {
    const auto ci = static_cast<int>(c);
    double sum = 0.0, mx = -std::numeric_limits<double>::infinity(), first_mean = 0.0, final_mean = 0.0;
    int counted = 0;
    for (const auto& g : groups) {
      const auto sub = report.filter_group(g);
      const auto r = sub.rounds();
      if (std::find(r.begin(), r.end(), 0) == r.end() || std::find(r.begin(), r.end(), s.final_round) == r.end()) {
        throw ArgumentError("report_improvement: group " + g + " lacks round 0 or round " +
                            std::to_string(s.final_round));
      }
      const auto e = make(g, c, mean_metrics(sub, 0, c).dsc, mean_metrics(sub, s.final_round, c).dsc);
      first_mean += e.first_dsc;
      final_mean += e.final_dsc;
      if (!std::isnan(e.relative)) {
        sum += e.relative;
        mx = std::max(mx, e.relative);
        ++counted;
      }
      s.entries.push_back(e);
    }
    s.mean_relative[ci] = counted ? sum / counted : std::numeric_limits<double>::quiet_NaN();
    s.max_relative[ci] = counted ? mx : std::numeric_limits<double>::quiet_NaN();
    const auto ng = static_cast<double>(groups.size());
    s.entries.push_back(make("overall", c, first_mean / ng, final_mean / ng));
  }
  return s;
}

std::string format_improvement(const ImprovementSummary& s) {
  std::ostringstream os;
  char buf[160];
  os << "Relative DSC change, R" << s.final_round << " vs R" << s.first_round << "\n";
  os << "group,class,dsc_r0,dsc_final,relative_pct,regression\n";
  for (const auto& e : s.entries) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%.4f,%.4f,%+.1f,%s\n", e.group.c_str(), to_string(e.cls), e.first_dsc,
                  e.final_dsc, 100.0 * e.relative, e.regression ? "yes" : "no");
    os << buf;
  }
  for (auto c : kMetricClasses) {
    const auto ci = static_cast<int>(c);
    std::snprintf(buf, sizeof(buf), "%s: mean %+.1f%%, max %+.1f%%\n", to_string(c), 100.0 * s.mean_relative[ci],
                  100.0 * s.max_relative[ci]);
    os << buf;
  }
  return os.str();
}

}  // namespace recseg
