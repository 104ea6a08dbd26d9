#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "recseg/preprocess.hpp"
#include "recseg/recursion.hpp"
#include "recseg/synthgen.hpp"

namespace recseg {

/// Everything needed to reproduce a run. Serialized as flat `key = value`
/// lines; `#` starts a comment. Shapes and spacings are written x-first
/// ("48x48x32", "2x2x1.75").
///
///   corpus.n, corpus.seed, corpus.corrupt_frac, corpus.jitter_mm, corpus.slice_drop
///   preprocess.spacing_mm, preprocess.shape, preprocess.bias_sigma_mm, preprocess.bias_correction
///   net.base_filters, net.dropout, net.dtype
///   plan.rounds, plan.epochs, plan.merged_entry, plan.redistort_per_epoch
///   deform.control_spacing_mm, deform.max_disp_mm
///   eval.against_clean, eval.postprocess
///   seed, folds, out, size_study.sizes
struct ExperimentConfig {
  int corpus_n = 50;
  std::uint64_t corpus_seed = 1;
  CorruptionSpec corruption{0.2, 2.0, 0.0};
  PreprocessConfig preprocess{{1.75, 2.0, 2.0}, {32, 48, 48}, 25.0, true};
  RoundPlan plan;
  std::uint64_t seed = 0;
  int folds = 5;
  std::filesystem::path out = "runs";
  std::vector<int> size_study_sizes{20, 30, 40, 50};

  /// Applies one `key = value` setting; throws FormatError naming the key.
  void set(const std::string& key, const std::string& value);
  void validate() const;

  /// Every key with its current value, in a fixed order.
  std::string dump() const;
  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  bool operator==(const ExperimentConfig& o) const { return dump() == o.dump(); }

 private:
  void assign(const std::string& key, const std::string& value);
};

/// "2x2x1.75" -> (z, y, x) = (1.75, 2, 2).
Vec3 parse_spacing_xyz(const std::string& text);
std::string format_spacing_xyz(const Vec3& v);
std::string format_shape_xyz(const Shape3& s);

}  // namespace recseg
