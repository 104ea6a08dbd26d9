#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "recseg/deform.hpp"
#include "recseg/grid.hpp"
#include "recseg/metrics.hpp"
#include "recseg/net/network.hpp"
#include "recseg/net/optimizer.hpp"

namespace recseg {

/// Round 0 trains on ground truth; every later round trains a freshly
/// initialized network on distorted ground-truth pairs plus the undistorted
/// images labeled by the previous round.
struct RoundPlan {
  int num_rounds = 3;
  int epochs_per_round = 100;
  net::NetworkConfig network;
  net::AdamSettings adam;
  DeformParams deform;
  bool merged_entry = false;         // add an (x, y + pseudo) combined-target entry per subject
  bool redistort_per_epoch = false;  // new distortion every epoch instead of once per round
  bool evaluate_against_clean = true;
  bool postprocess = true;

  void validate() const;
};

template <typename T>
struct RoundArtifacts {
  int round = 0;
  net::NetworkParameters<T> params;
  std::uint64_t init_seed = 0;
  std::uint64_t init_checksum = 0;  // parameters before the first update
  std::vector<std::string> subject_ids;
  std::vector<LabelMap> pseudo_labels;  // aligned with subject_ids
  std::vector<double> loss_curve;       // one entry per epoch
  std::vector<double> lr_curve;         // learning rate used in each epoch
  MetricsReport validation;
};

/// Seeds of one round, all derived from the run's base seed.
std::uint64_t round_init_seed(std::uint64_t base, int round);
std::uint64_t round_epoch_seed(std::uint64_t base, int round, int epoch);
std::uint64_t round_distort_seed(std::uint64_t base, int round, std::size_t subject_index, int epoch = -1);

/// Trains on (x, y) pairs only and labels every training image.
template <typename T>
RoundArtifacts<T> train_round_zero(const std::vector<SubjectRecord>& train_set, const RoundPlan& plan,
                                   std::uint64_t seed);

/// Per subject: the distorted pair (x^, y^) and (x, pseudo), plus the merged
/// (x, y + pseudo) entry when enabled. Distortions always start from the
/// original pair. Throws IntegrityError if a pseudo-label is missing or
/// geometrically unpaired.
std::vector<net::TrainingSample> build_round_dataset(const std::vector<SubjectRecord>& train_set,
                                                     const std::vector<LabelMap>& pseudo_labels,
                                                     const RoundPlan& plan, int round, std::uint64_t seed,
                                                     int epoch = -1);

/// Fresh network for round r >= 1 trained on `dataset`; labels the
/// undistorted training images afterwards.
template <typename T>
RoundArtifacts<T> train_round(int round, const std::vector<net::TrainingSample>& dataset,
                              const std::vector<SubjectRecord>& train_set, const RoundPlan& plan, std::uint64_t seed);

/// Where and how run_plan persists its rounds.
struct RunContext {
  std::optional<std::filesystem::path> run_dir;  // round_{r}/... when set; completed rounds are reloaded
  std::string group = "G1";                       // group label written into metrics rows
  std::ostream* log = nullptr;
};

/// Runs rounds 0..num_rounds-1 on `train`, scoring each round on `validation`.
/// Throws ArgumentError if `train` is empty or the two sets share a subject.
template <typename T>
std::vector<RoundArtifacts<T>> run_split(const std::vector<SubjectRecord>& train,
                                         const std::vector<SubjectRecord>& validation, const RoundPlan& plan,
                                         std::uint64_t seed, const RunContext& ctx = {});

/// Holds out subjects whose fold equals `fold` and runs the plan on the rest.
template <typename T>
std::vector<RoundArtifacts<T>> run_plan(const std::vector<SubjectRecord>& corpus, int fold, const RoundPlan& plan,
                                        std::uint64_t seed, const RunContext& ctx = {});

/// Concatenated per-round validation metrics.
template <typename T>
MetricsReport collect_validation(const std::vector<RoundArtifacts<T>>& rounds);

}  // namespace recseg
