#include "recseg/recursion.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "recseg/errors.hpp"
#include "recseg/net/checkpoint.hpp"
#include "recseg/random.hpp"
#include "recseg/volume_io.hpp"

namespace recseg {
namespace fs = std::filesystem;

namespace {

enum SeedTag : std::uint64_t { kTagInit = 0x494e4954, kTagEpoch = 0x45504f43, kTagDistort = 0x44495354 };

using Provider = std::function<const std::vector<net::TrainingSample>&(int epoch)>;

template <typename T>
RoundArtifacts<T> train_fresh(int round, const Provider& data, const std::vector<SubjectRecord>& train_set,
                              const RoundPlan& plan, std::uint64_t seed, std::ostream* log) {
  RoundArtifacts<T> a;
  a.round = round;
  a.init_seed = round_init_seed(seed, round);
  a.params = net::build<T>(plan.network, a.init_seed);
  a.init_checksum = a.params.checksum();
  auto opt = net::make_optimizer(a.params, plan.adam);
  for (int e = 0; e < plan.epochs_per_round; ++e) {
    const auto& samples = data(e);
    const double l = net::train_epoch(a.params, opt, samples, round_epoch_seed(seed, round, e));
    a.loss_curve.push_back(l);
    if (log) *log << "round " << round << " epoch " << e << " loss " << l << '\n' << std::flush;
  }
  a.lr_curve = opt.lr_history;
  for (const auto& s : train_set) {
    a.subject_ids.push_back(s.subject_id);
    a.pseudo_labels.push_back(net::predict(a.params, s.image));
  }
  return a;
}

const LabelMap& reference_label(const SubjectRecord& s, const RoundPlan& plan) {
  return plan.evaluate_against_clean && s.clean_label ? *s.clean_label : s.label;
}

template <typename T>
void score_validation(RoundArtifacts<T>& a, const std::vector<SubjectRecord>& validation, const RoundPlan& plan,
                      const std::string& group) {
  for (const auto& s : validation) {
    const LabelMap pred = net::predict(a.params, s.image);
    a.validation.add(group, s.subject_id, a.round, evaluate(pred, reference_label(s, plan), plan.postprocess));
  }
}

// ---- run directory persistence ----

fs::path round_dir(const fs::path& run, int r) { return run / ("round_" + std::to_string(r)); }

template <typename T>
void save_round(const RoundArtifacts<T>& a, const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir / "pseudo_labels");
  net::write_checkpoint(a.params, static_cast<int>(a.loss_curve.size()), a.round, dir / "checkpoint");
  for (std::size_t i = 0; i < a.subject_ids.size(); ++i) {
    write_labels(a.pseudo_labels[i], dir / "pseudo_labels" / (a.subject_ids[i] + ".vol"));
  }
  {
    std::ofstream out(dir / "pseudo_labels" / "subjects.txt");
    for (const auto& id : a.subject_ids) out << id << '\n';
  }
  {
    std::ofstream out(dir / "loss.csv");
    out << "epoch,loss,learning_rate\n";
    for (std::size_t e = 0; e < a.loss_curve.size(); ++e) {
      out << e << ',' << format_double(a.loss_curve[e]) << ',' << format_double(a.lr_curve.at(e)) << '\n';
    }
  }
  {
    std::ofstream out(dir / "round.txt");
    out << "round " << a.round << '\n'
        << "init_seed " << a.init_seed << '\n'
        << "init_checksum " << a.init_checksum << '\n';
  }
  write_metrics_csv(a.validation, dir / "metrics.csv");
  std::ofstream(dir / "COMPLETE") << "ok\n";
}

template <typename T>
RoundArtifacts<T> load_round(const fs::path& dir, int round, const std::vector<SubjectRecord>& train_set) {
  RoundArtifacts<T> a;
  a.round = round;
  a.params = net::read_checkpoint<T>(dir / "checkpoint");
  for (const auto& s : train_set) {
    const fs::path p = dir / "pseudo_labels" / (s.subject_id + ".vol");
    if (!fs::exists(p)) throw IntegrityError("round " + std::to_string(round) + ": missing pseudo-label " + p.string());
    a.subject_ids.push_back(s.subject_id);
    a.pseudo_labels.push_back(read_labels(p));
  }
  std::ifstream loss(dir / "loss.csv");
  std::string line;
  std::getline(loss, line);
  while (std::getline(loss, line)) {
    std::istringstream ls(line);
    std::string e, l, lr;
    std::getline(ls, e, ',');
    std::getline(ls, l, ',');
    std::getline(ls, lr, ',');
    a.loss_curve.push_back(parse_double(l, "loss"));
    a.lr_curve.push_back(parse_double(lr, "learning_rate"));
  }
  std::ifstream info(dir / "round.txt");
  std::string key;
  while (info >> key) {
    if (key == "init_seed") info >> a.init_seed;
    else if (key == "init_checksum") info >> a.init_checksum;
    else info >> line;
  }
  a.validation = read_metrics_csv(dir / "metrics.csv");
  return a;
}

}  // namespace

void RoundPlan::validate() const {
  if (num_rounds < 1) throw ArgumentError("plan: num_rounds must be >= 1");
  if (epochs_per_round < 0) throw ArgumentError("plan: epochs_per_round must be >= 0");
  if (deform.max_disp_mm < 0.0) throw ArgumentError("plan: max displacement must be >= 0");
  network.validate();
}

std::uint64_t round_init_seed(std::uint64_t base, int round) {
  return derive_seed(base, {kTagInit, static_cast<std::uint64_t>(round)});
}

std::uint64_t round_epoch_seed(std::uint64_t base, int round, int epoch) {
  return derive_seed(base, {kTagEpoch, static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(epoch)});
}

std::uint64_t round_distort_seed(std::uint64_t base, int round, std::size_t subject_index, int epoch) {
  return derive_seed(base, {kTagDistort, static_cast<std::uint64_t>(round), subject_index,
                            static_cast<std::uint64_t>(static_cast<std::int64_t>(epoch))});
}

template <typename T>
RoundArtifacts<T> train_round_zero(const std::vector<SubjectRecord>& train_set, const RoundPlan& plan,
                                   std::uint64_t seed) {
  if (train_set.empty()) throw ArgumentError("train_round_zero: empty training set");
  plan.validate();
  std::vector<net::TrainingSample> samples;
  for (const auto& s : train_set) samples.push_back({s.image, s.label, s.subject_id});
  return train_fresh<T>(0, [&](int) -> const auto& { return samples; }, train_set, plan, seed, nullptr);
}

std::vector<net::TrainingSample> build_round_dataset(const std::vector<SubjectRecord>& train_set,
                                                     const std::vector<LabelMap>& pseudo_labels,
                                                     const RoundPlan& plan, int round, std::uint64_t seed,
                                                     int epoch) {
  if (pseudo_labels.size() != train_set.size()) {
    throw IntegrityError("round dataset: " + std::to_string(pseudo_labels.size()) + " pseudo-labels for " +
                         std::to_string(train_set.size()) + " training subjects");
  }
  std::vector<net::TrainingSample> out;
  out.reserve(train_set.size() * (plan.merged_entry ? 3 : 2));
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    const auto& s = train_set[i];
    const auto& pseudo = pseudo_labels[i];
    if (!pseudo.same_geometry(s.image)) {
      throw IntegrityError("round dataset: pseudo-label of " + s.subject_id + " is not paired with its image");
    }
    // Only the original pair is needed for distortion.
    SubjectRecord original;
    original.subject_id = s.subject_id;
    original.image = s.image;
    original.label = s.label;
    original.fold = s.fold;
    auto d = distort_pair(original, plan.deform, round_distort_seed(seed, round, i, epoch));
    out.push_back({std::move(d.subject.image), std::move(d.subject.label), s.subject_id + "/distorted"});
    out.push_back({s.image, pseudo, s.subject_id + "/pseudo"});
    if (plan.merged_entry) out.push_back({s.image, net::combined_target(s.label, pseudo), s.subject_id + "/merged"});
  }
  return out;
}

template <typename T>
RoundArtifacts<T> train_round(int round, const std::vector<net::TrainingSample>& dataset,
                              const std::vector<SubjectRecord>& train_set, const RoundPlan& plan,
                              std::uint64_t seed) {
  if (round < 1) throw ArgumentError("train_round: round must be >= 1");
  if (dataset.empty()) throw ArgumentError("train_round: empty round dataset");
  plan.validate();
  return train_fresh<T>(round, [&](int) -> const auto& { return dataset; }, train_set, plan, seed, nullptr);
}

template <typename T>
std::vector<RoundArtifacts<T>> run_split(const std::vector<SubjectRecord>& train,
                                         const std::vector<SubjectRecord>& validation, const RoundPlan& plan,
                                         std::uint64_t seed, const RunContext& ctx) {
  plan.validate();
  if (train.empty()) throw ArgumentError("run_plan: no training subjects");
  std::set<std::string> train_ids;
  for (const auto& s : train) train_ids.insert(s.subject_id);
  for (const auto& s : validation) {
    if (train_ids.count(s.subject_id)) {
      throw ArgumentError("run_plan: subject " + s.subject_id + " is in both training and validation sets");
    }
  }

  std::vector<RoundArtifacts<T>> rounds;
  for (int r = 0; r < plan.num_rounds; ++r) {
    if (ctx.run_dir && fs::exists(round_dir(*ctx.run_dir, r) / "COMPLETE")) {
      if (ctx.log) *ctx.log << ctx.group << ": round " << r << " already complete, reloading\n";
      rounds.push_back(load_round<T>(round_dir(*ctx.run_dir, r), r, train));
      continue;
    }
    if (ctx.log) *ctx.log << ctx.group << ": training round " << r << '\n';
    RoundArtifacts<T> a;
    if (r == 0) {
      std::vector<net::TrainingSample> samples;
      for (const auto& s : train) samples.push_back({s.image, s.label, s.subject_id});
      a = train_fresh<T>(0, [&](int) -> const auto& { return samples; }, train, plan, seed, ctx.log);
    } else {
      const auto& pseudo = rounds.back().pseudo_labels;
      std::vector<net::TrainingSample> fixed;
      std::vector<net::TrainingSample> per_epoch;
      if (!plan.redistort_per_epoch) fixed = build_round_dataset(train, pseudo, plan, r, seed);
      const Provider data = [&](int e) -> const std::vector<net::TrainingSample>& {
        if (!plan.redistort_per_epoch) return fixed;
        per_epoch = build_round_dataset(train, pseudo, plan, r, seed, e);
        return per_epoch;
      };
      a = train_fresh<T>(r, data, train, plan, seed, ctx.log);
    }
    score_validation(a, validation, plan, ctx.group);
    if (ctx.run_dir) save_round(a, round_dir(*ctx.run_dir, r));
    rounds.push_back(std::move(a));
  }
  return rounds;
}

template <typename T>
std::vector<RoundArtifacts<T>> run_plan(const std::vector<SubjectRecord>& corpus, int fold, const RoundPlan& plan,
                                        std::uint64_t seed, const RunContext& ctx) {
  std::vector<SubjectRecord> train, validation;
  for (const auto& s : corpus) (s.fold == fold ? validation : train).push_back(s);
  if (train.empty()) {
    throw ArgumentError("run_plan: holding out fold " + std::to_string(fold) + " leaves no training subjects");
  }
  return run_split<T>(train, validation, plan, seed, ctx);
}

template <typename T>
MetricsReport collect_validation(const std::vector<RoundArtifacts<T>>& rounds) {
  MetricsReport out;
  for (const auto& r : rounds) out.append(r.validation);
  return out;
}

#define RECSEG_INSTANTIATE_RECURSION(T)                                                                          \
  template RoundArtifacts<T> train_round_zero<T>(const std::vector<SubjectRecord>&, const RoundPlan&,           \
                                                 std::uint64_t);                                                 \
  template RoundArtifacts<T> train_round<T>(int, const std::vector<net::TrainingSample>&,                       \
                                            const std::vector<SubjectRecord>&, const RoundPlan&, std::uint64_t); \
  template std::vector<RoundArtifacts<T>> run_split<T>(const std::vector<SubjectRecord>&,                       \
                                                       const std::vector<SubjectRecord>&, const RoundPlan&,      \
                                                       std::uint64_t, const RunContext&);                        \
  template std::vector<RoundArtifacts<T>> run_plan<T>(const std::vector<SubjectRecord>&, int, const RoundPlan&, \
                                                      std::uint64_t, const RunContext&);                         \
  template MetricsReport collect_validation(const std::vector<RoundArtifacts<T>>&);

RECSEG_INSTANTIATE_RECURSION(float)
RECSEG_INSTANTIATE_RECURSION(double)

}  // namespace recseg
