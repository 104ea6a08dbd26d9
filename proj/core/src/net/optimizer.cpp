#include "recseg/net/optimizer.hpp"

#include <cmath>
#include <numeric>

#include "recseg/errors.hpp"
#include "recseg/random.hpp"
#include "fp_env.hpp"

namespace recseg::net {

double learning_rate(const AdamSettings& s, int epoch) {
  if (epoch < 0) throw ArgumentError("learning_rate: negative epoch");
  // Repeated multiplication keeps 0.001 * 0.95 and 0.001 * 0.95^2 exactly at
  // their decimal values in double precision.
  double factor = 1.0;
  for (int i = 0; i < epoch / s.decay_every; ++i) factor *= s.decay;
  return s.alpha * factor;
}

template <typename T>
OptimizerState<T> make_optimizer(const NetworkParameters<T>& params, AdamSettings settings) {
  OptimizerState<T> opt;
  opt.settings = settings;
  for (const auto& t : params.tensors) {
    opt.first_moment.emplace_back(t.values.size(), T{});
    opt.second_moment.emplace_back(t.values.size(), T{});
  }
  return opt;
}

template <typename T>
void adam_step(NetworkParameters<T>& params, OptimizerState<T>& opt, const NetworkParameters<T>& gradients) {
  if (gradients.tensors.size() != params.tensors.size() || opt.first_moment.size() != params.tensors.size()) {
    throw ArgumentError("adam_step: parameter, gradient and moment layouts differ");
  }
  const FlushDenormals ftz;
  const auto& s = opt.settings;
  ++opt.step;
  const double lr = learning_rate(s, opt.epoch);
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(opt.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(opt.step));
  const T b1 = static_cast<T>(s.beta1), b2 = static_cast<T>(s.beta2);
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    auto& w = params.tensors[i].values;
    const auto& g = gradients.tensors[i].values;
    auto& m = opt.first_moment[i];
    auto& v = opt.second_moment[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      const double mhat = static_cast<double>(m[j]) / c1;
      const double vhat = static_cast<double>(v[j]) / c2;
      w[j] = static_cast<T>(static_cast<double>(w[j]) - lr * mhat / (std::sqrt(vhat) + s.epsilon));
    }
  }
}

template <typename T>
double train_epoch(NetworkParameters<T>& params, OptimizerState<T>& opt, std::span<const TrainingSample> samples,
                   std::uint64_t seed) {
  if (samples.empty()) throw ArgumentError("train_epoch: empty training stream");
  const FlushDenormals ftz;
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {0x5348}));
  rng.shuffle(order);

  double total = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& s = samples[order[k]];
    auto r = backward(params, s.image, s.target, Mode::kTrain, derive_seed(seed, {0x4452, k}));
    total += r.loss;
    adam_step(params, opt, r.gradients);
  }
  opt.lr_history.push_back(learning_rate(opt.settings, opt.epoch));
  ++opt.epoch;
  return total / static_cast<double>(samples.size());
}

#define RECSEG_INSTANTIATE_OPTIMIZER(T)                                                                   \
  template OptimizerState<T> make_optimizer(const NetworkParameters<T>&, AdamSettings);                   \
  template void adam_step(NetworkParameters<T>&, OptimizerState<T>&, const NetworkParameters<T>&);        \
  template double train_epoch(NetworkParameters<T>&, OptimizerState<T>&, std::span<const TrainingSample>, \
                              std::uint64_t);

RECSEG_INSTANTIATE_OPTIMIZER(float)
RECSEG_INSTANTIATE_OPTIMIZER(double)

}  // namespace recseg::net
