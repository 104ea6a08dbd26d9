#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "recseg/grid.hpp"
#include "recseg/net/tensor.hpp"

namespace recseg::net {

enum class Dtype { kF32, kF64 };
const char* to_string(Dtype d);
Dtype parse_dtype(const std::string& s);

struct NetworkConfig {
  int in_channels = 1;
  int num_classes = kNumClasses;
  int base_filters = 8;
  int depth = 2;
  double dropout_rate = 0.3;
  Dtype parameter_dtype = Dtype::kF32;

  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

/// Slope of the leaky rectifier used after every convolution except the
/// residual projection and the head.
inline constexpr double kLeakySlope = 0.01;
/// Lower clamp on probabilities before the logarithm in the loss.
inline constexpr double kProbabilityFloor = 1e-12;

template <typename T>
struct NamedTensor {
  std::string name;
  std::vector<std::int64_t> dims;
  std::vector<T> values;
};

/// All learnable tensors of one network, in a fixed order that depends only
/// on the config: per convolution `<layer>.weight` [out, in, k, k, k] then
/// `<layer>.bias` [out].
template <typename T>
struct NetworkParameters {
  NetworkConfig config;
  std::vector<NamedTensor<T>> tensors;

  std::size_t count() const;
  const NamedTensor<T>& find(const std::string& name) const;
  NamedTensor<T>& find(const std::string& name);
  /// FNV-1a over every parameter's bytes.
  std::uint64_t checksum() const;
  /// Same layout, all zeros.
  NetworkParameters zeros_like() const;
};

/// Names and shapes of the convolutions, for inspection and tests.
struct ConvSpec {
  std::string name;
  int in_channels;
  int out_channels;
  int kernel;
  int stride;
};
std::vector<ConvSpec> layer_specs(const NetworkConfig& config);
std::size_t parameter_count(const NetworkConfig& config);

enum class Mode { kTrain, kEval };

/// Per-voxel nonnegative class weights (C x Z x Y x X); hard labels are the
/// one-hot special case. The round-1+ combined target y + pseudo-label sums
/// two one-hot maps.
using WeightMap = Tensor<float>;
using Target = std::variant<LabelMap, WeightMap>;

WeightMap one_hot(const LabelMap& l);
/// one_hot(a) + one_hot(b).
WeightMap combined_target(const LabelMap& a, const LabelMap& b);

/// Fan-in scaled uniform initialization of every convolution, zero biases and
/// a zero head, so the untrained network predicts (1/3, 1/3, 1/3).
template <typename T>
NetworkParameters<T> build(const NetworkConfig& config, std::uint64_t seed);

/// Throws ArgumentError unless each axis is divisible by 4.
void check_input_shape(const Shape3& s);

/// Class probabilities (C x Z x Y x X). Dropout is applied only in train mode,
/// with masks determined by `seed`.
template <typename T>
Tensor<T> forward(const NetworkParameters<T>& params, const Volume& x, Mode mode, std::uint64_t seed = 0);

/// Per-voxel -sum_c w_c ln(max(p_c, 1e-12)).
template <typename T>
std::vector<double> voxel_losses(const Tensor<T>& probabilities, const Target& target);
/// Mean of voxel_losses.
template <typename T>
double loss(const Tensor<T>& probabilities, const Target& target);

template <typename T>
struct GradientResult {
  double loss = 0.0;
  NetworkParameters<T> gradients;
  Tensor<T> probabilities;
};

/// Exact gradient of loss(forward(params, x, mode, seed), target).
template <typename T>
GradientResult<T> backward(const NetworkParameters<T>& params, const Volume& x, const Target& target, Mode mode,
                           std::uint64_t seed = 0);

/// Hash of the sign of every rectifier input. Two parameter sets with equal
/// patterns lie on the same linear piece of every activation, so the loss is
/// smooth along the segment between them (used by gradient checks).
template <typename T>
std::uint64_t rectifier_pattern(const NetworkParameters<T>& params, const Volume& x, Mode mode,
                                std::uint64_t seed = 0);

/// Per-voxel argmax; ties resolve to the lowest class index.
template <typename T>
LabelMap argmax_labels(const Tensor<T>& scores, const Volume& like);

/// Eval-mode argmax segmentation.
template <typename T>
LabelMap predict(const NetworkParameters<T>& params, const Volume& x);

}  // namespace recseg::net
