#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "recseg/net/network.hpp"

namespace recseg::net {

/// Adam with a step decay of the learning rate: alpha * decay^floor(epoch / decay_every).
struct AdamSettings {
  double alpha = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double decay = 0.95;
  int decay_every = 10;
};

double learning_rate(const AdamSettings& s, int epoch);

template <typename T>
struct OptimizerState {
  AdamSettings settings;
  std::int64_t step = 0;
  int epoch = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
  std::vector<double> lr_history;  // learning rate used in each completed epoch
};

template <typename T>
OptimizerState<T> make_optimizer(const NetworkParameters<T>& params, AdamSettings settings = {});

/// One Adam step with the current epoch's learning rate.
template <typename T>
void adam_step(NetworkParameters<T>& params, OptimizerState<T>& opt, const NetworkParameters<T>& gradients);

struct TrainingSample {
  Volume image;
  Target target;
  std::string tag;
};

/// One pass over `samples` in a seeded shuffled order, batch size one.
/// Returns the mean training loss.
template <typename T>
double train_epoch(NetworkParameters<T>& params, OptimizerState<T>& opt, std::span<const TrainingSample> samples,
                   std::uint64_t seed);

}  // namespace recseg::net
