#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "recseg/config.hpp"
#include "recseg/metrics.hpp"

namespace recseg {

/// Seeded permutation dealt round-robin into k folds; entry i is the fold of
/// subject i. Fold sizes differ by at most one. Throws if n < k.
std::vector<int> split_folds(std::size_t n, int k, std::uint64_t seed);
void assign_folds(std::vector<SubjectRecord>& subjects, int k, std::uint64_t seed);
/// Seed of the fold assignment used by run_crossval and the train command.
std::uint64_t fold_seed(const ExperimentConfig& cfg);

/// Generates the synthetic corpus described by `cfg` (or takes `raw`),
/// preprocesses every subject and assigns folds.
std::vector<SubjectRecord> prepare_corpus(const ExperimentConfig& cfg,
                                          std::optional<std::vector<SubjectRecord>> raw = std::nullopt);

struct StudyResult {
  MetricsReport report;
  std::string markdown;
  std::filesystem::path dir;
};

/// One recursive plan per fold (fold g held out), persisted under
/// `<out>/crossval/fold_<g>`; writes metrics.csv, table.md, improvement.txt
/// and plan.resolved.config. Completed rounds found on disk are reused.
StudyResult run_crossval(const ExperimentConfig& cfg, std::ostream* log = nullptr,
                         std::optional<std::vector<SubjectRecord>> corpus = std::nullopt);

/// For each size n: a seeded subsample of n subjects split 80/20, one
/// recursive plan, persisted under `<out>/sizestudy/size_<n>`.
StudyResult run_size_study(const ExperimentConfig& cfg, std::ostream* log = nullptr,
                           std::optional<std::vector<SubjectRecord>> corpus = std::nullopt);

struct Improvement {
  std::string group;  // a group label, or "overall" for the cross-group means
  MetricClass cls = MetricClass::kBoth;
  double first_dsc = 0.0;  // mean DSC of round 0
  double final_dsc = 0.0;  // mean DSC of the last round
  double relative = 0.0;   // (final - first) / first; NaN when first is 0
  bool regression = false;
};

struct ImprovementSummary {
  int first_round = 0;
  int final_round = 0;
  std::vector<Improvement> entries;  // per group and class, then "overall" per class
  // Mean and max of the per-group relative improvements, per class.
  double mean_relative[3] = {0.0, 0.0, 0.0};
  double max_relative[3] = {0.0, 0.0, 0.0};

  const Improvement& find(const std::string& group, MetricClass c) const;
};

/// Relative Dice improvement of the last round over round 0. Throws
/// ArgumentError unless the report holds round 0 and a later round.
ImprovementSummary report_improvement(const MetricsReport& report);
std::string format_improvement(const ImprovementSummary& s);

}  // namespace recseg
