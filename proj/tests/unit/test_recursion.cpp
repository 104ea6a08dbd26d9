#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "recseg/errors.hpp"
#include "recseg/net/checkpoint.hpp"
#include "recseg/recursion.hpp"
#include "recseg/synthgen.hpp"
#include "test_support.hpp"

using namespace recseg;
namespace fs = std::filesystem;

namespace {

// Small preprocessed phantoms (8 x 16 x 16 at 7 x 6 x 6 mm).
std::vector<SubjectRecord> tiny_corpus(int n) {
  static std::vector<SubjectRecord> cache;
  const PreprocessConfig cfg{{7, 6, 6}, {8, 16, 16}, 25.0, true};
  while (static_cast<int>(cache.size()) < n) {
    const int i = static_cast<int>(cache.size());
    SubjectRecord s = preprocess_subject(generate_subject(sample_phantom_spec(static_cast<std::uint64_t>(i))), cfg);
    s.subject_id = "t" + std::to_string(i);
    s.fold = i % 5;
    s.clean_label = s.label;
    cache.push_back(std::move(s));
  }
  return {cache.begin(), cache.begin() + n};
}

RoundPlan tiny_plan(int rounds, int epochs) {
  RoundPlan p;
  p.num_rounds = rounds;
  p.epochs_per_round = epochs;
  p.network.base_filters = 2;
  p.deform = DeformParams{{24, 24, 24}, 6.0};
  return p;
}

}  // namespace

TEST(RoundSeeds, DistinctPerRoundEpochAndSubject) {
  std::set<std::uint64_t> seen;
  for (int r = 0; r < 3; ++r) {
    seen.insert(round_init_seed(7, r));
    for (int e = 0; e < 3; ++e) seen.insert(round_epoch_seed(7, r, e));
    for (std::size_t i = 0; i < 3; ++i) seen.insert(round_distort_seed(7, r, i));
  }
  EXPECT_EQ(seen.size(), 3u * 7u);
  EXPECT_NE(round_init_seed(7, 0), round_init_seed(8, 0));
}

TEST(RoundZero, UntrainedNetworkLabelsEverythingBackground) {
  const auto train = tiny_corpus(2);
  const auto a = train_round_zero<float>(train, tiny_plan(1, 0), 1);
  ASSERT_EQ(a.pseudo_labels.size(), 2u);
  for (const auto& l : a.pseudo_labels) EXPECT_EQ(l, LabelMap(l.shape(), l.spacing(), l.origin()));
  EXPECT_TRUE(a.loss_curve.empty());
  EXPECT_EQ(a.subject_ids, (std::vector<std::string>{"t0", "t1"}));
}

TEST(RoundZero, OneLossPerEpoch) {
  const auto a = train_round_zero<float>(tiny_corpus(2), tiny_plan(1, 3), 1);
  EXPECT_EQ(a.loss_curve.size(), 3u);
  EXPECT_EQ(a.lr_curve, (std::vector<double>{0.001, 0.001, 0.001}));
  EXPECT_EQ(a.init_seed, round_init_seed(1, 0));
  EXPECT_EQ(a.init_checksum, net::build<float>(tiny_plan(1, 3).network, a.init_seed).checksum());
}

TEST(RoundDataset, TwoEntriesPerSubjectFromTheOriginalPair) {
  const auto train = tiny_corpus(3);
  std::vector<LabelMap> pseudo;
  for (const auto& s : train) pseudo.push_back(grid_like<std::uint8_t>(s.label));
  auto plan = tiny_plan(3, 1);
  const auto d1 = build_round_dataset(train, pseudo, plan, 1, 5);
  ASSERT_EQ(d1.size(), 6u);
  EXPECT_EQ(d1[0].tag, "t0/distorted");
  EXPECT_EQ(d1[1].tag, "t0/pseudo");
  EXPECT_EQ(d1[1].image, train[0].image);
  EXPECT_EQ(std::get<LabelMap>(d1[1].target), pseudo[0]);
  const DistortedPair expect = distort_pair(train[0], plan.deform, round_distort_seed(5, 1, 0));
  EXPECT_EQ(d1[0].image, expect.subject.image);
  EXPECT_EQ(std::get<LabelMap>(d1[0].target), expect.subject.label);

  // Each round draws a fresh distortion.
  const auto d2 = build_round_dataset(train, pseudo, plan, 2, 5);
  EXPECT_NE(d2[0].image, d1[0].image);

  plan.merged_entry = true;
  const auto m = build_round_dataset(train, pseudo, plan, 1, 5);
  ASSERT_EQ(m.size(), 9u);
  EXPECT_EQ(m[2].tag, "t0/merged");
}

TEST(RoundDataset, ZeroMagnitudeDistortionReproducesThePair) {
  const auto train = tiny_corpus(2);
  std::vector<LabelMap> pseudo{train[0].label, train[1].label};
  auto plan = tiny_plan(2, 1);
  plan.deform.max_disp_mm = 0.0;
  const auto d = build_round_dataset(train, pseudo, plan, 1, 5);
  EXPECT_EQ(std::get<LabelMap>(d[0].target), train[0].label);
  for (std::size_t i = 0; i < d[0].image.size(); ++i) EXPECT_NEAR(d[0].image[i], train[0].image[i], 1e-6);
}

TEST(RoundDataset, StreamLossEqualsCombinedTargetLoss) {
  // Summing the two entries' losses voxel by voxel equals the loss of the
  // combined target y + pseudo on the undistorted image.
  const auto train = tiny_corpus(1);
  LabelMap pseudo = train[0].label;
  for (std::size_t i = 0; i < pseudo.size(); i += 3) pseudo[i] = static_cast<std::uint8_t>((pseudo[i] + 1) % 3);
  auto plan = tiny_plan(2, 1);
  plan.deform.max_disp_mm = 0.0;
  const auto d = build_round_dataset(train, {pseudo}, plan, 1, 5);
  net::NetworkConfig c = plan.network;
  c.parameter_dtype = net::Dtype::kF64;
  auto params = net::build<double>(c, 3);
  Rng rng(4);
  for (auto& v : params.find("head.weight").values) v = rng.uniform(-1, 1);
  const auto p0 = net::forward(params, d[0].image, net::Mode::kEval);
  const auto p1 = net::forward(params, d[1].image, net::Mode::kEval);
  const auto a = net::voxel_losses(p0, d[0].target), b = net::voxel_losses(p1, d[1].target);
  const auto m = net::voxel_losses(net::forward(params, train[0].image, net::Mode::kEval),
                                   net::Target{net::combined_target(train[0].label, pseudo)});
  for (std::size_t v = 0; v < m.size(); ++v) ASSERT_NEAR(a[v] + b[v], m[v], 1e-10) << v;
}

TEST(RoundDataset, MismatchedPseudoLabelsAreRejected) {
  const auto train = tiny_corpus(2);
  EXPECT_THROW(build_round_dataset(train, {train[0].label}, tiny_plan(2, 1), 1, 5), IntegrityError);
  EXPECT_THROW(build_round_dataset(train, {train[0].label, LabelMap(Shape3{4, 4, 4})}, tiny_plan(2, 1), 1, 5),
               IntegrityError);
}

TEST(TrainRound, StartsFromAFreshInitialization) {
  const auto train = tiny_corpus(2);
  const auto plan = tiny_plan(2, 1);
  const auto r0 = train_round_zero<float>(train, plan, 9);
  const auto data = build_round_dataset(train, r0.pseudo_labels, plan, 1, 9);
  const auto r1 = train_round<float>(1, data, train, plan, 9);
  EXPECT_EQ(r1.round, 1);
  EXPECT_NE(r1.init_checksum, r0.init_checksum);
  EXPECT_NE(r1.init_checksum, r0.params.checksum());
  EXPECT_EQ(r1.pseudo_labels.size(), 2u);
  EXPECT_EQ(r1.loss_curve.size(), 1u);
}

TEST(RunPlan, HoldsOutOneFoldAndScoresEveryRound) {
  const auto corpus = tiny_corpus(10);
  const auto rounds = run_plan<float>(corpus, 0, tiny_plan(2, 1), 3);
  ASSERT_EQ(rounds.size(), 2u);
  EXPECT_EQ(rounds[0].subject_ids.size(), 8u);
  const MetricsReport v = collect_validation(rounds);
  EXPECT_EQ(v.rows.size(), 2u * 2u * 3u);  // subjects x rounds x classes
  std::set<std::string> subjects;
  for (const auto& row : v.rows) subjects.insert(row.subject);
  EXPECT_EQ(subjects, (std::set<std::string>{"t0", "t5"}));
}

TEST(RunSplit, RejectsOverlapAndEmptyTraining) {
  const auto corpus = tiny_corpus(3);
  EXPECT_THROW(run_split<float>(corpus, {corpus[1]}, tiny_plan(1, 0), 1), ArgumentError);
  EXPECT_THROW(run_split<float>({}, corpus, tiny_plan(1, 0), 1), ArgumentError);
}

TEST(RunSplit, PersistsRoundsAndResumesBitIdentically) {
  const auto corpus = tiny_corpus(4);
  const std::vector<SubjectRecord> train(corpus.begin(), corpus.begin() + 3), val{corpus[3]};
  const auto plan = tiny_plan(3, 2);
  const auto dir = fixtures::temp_dir("recursion_run");
  RunContext ctx;
  ctx.run_dir = dir;
  const auto full = run_split<float>(train, val, plan, 5, ctx);
  for (int r = 0; r < 3; ++r) {
    const fs::path rd = dir / ("round_" + std::to_string(r));
    EXPECT_TRUE(fs::exists(rd / "COMPLETE"));
    EXPECT_TRUE(fs::exists(rd / "loss.csv"));
    EXPECT_EQ(net::read_checkpoint<float>(rd / "checkpoint").checksum(), full[static_cast<std::size_t>(r)].params.checksum());
    EXPECT_TRUE(fs::exists(rd / "pseudo_labels" / "t0.vol"));
  }
  const std::string reference = metrics_csv(collect_validation(full));

  // Drop the last round and resume: rounds 0-1 are reloaded, round 2 retrained.
  fs::remove_all(dir / "round_2");
  const auto resumed = run_split<float>(train, val, plan, 5, ctx);
  EXPECT_EQ(metrics_csv(collect_validation(resumed)), reference);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(resumed[r].params.checksum(), full[r].params.checksum());
    EXPECT_EQ(resumed[r].loss_curve, full[r].loss_curve);
    EXPECT_EQ(resumed[r].pseudo_labels, full[r].pseudo_labels);
  }
  // A fresh in-memory run agrees as well.
  EXPECT_EQ(metrics_csv(collect_validation(run_split<float>(train, val, plan, 5))), reference);
}

TEST(RunSplit, ScoresAgainstCleanLabelsWhenAsked) {
  auto corpus = tiny_corpus(3);
  // Corrupt the stored label of the validation subject; the clean copy stays intact.
  corpus[2].label = LabelMap(corpus[2].label.shape(), corpus[2].label.spacing(), corpus[2].label.origin());
  corpus[2].corrupted = true;
  const std::vector<SubjectRecord> train(corpus.begin(), corpus.begin() + 2), val{corpus[2]};
  auto plan = tiny_plan(1, 0);
  const auto clean = collect_validation(run_split<float>(train, val, plan, 1));
  plan.evaluate_against_clean = false;
  const auto stored = collect_validation(run_split<float>(train, val, plan, 1));
  // An all-background prediction scores 1 against an empty label and 0 against the clean one.
  EXPECT_EQ(stored.rows[0].m.dsc, 1.0);
  EXPECT_EQ(clean.rows[0].m.dsc, 0.0);
}
