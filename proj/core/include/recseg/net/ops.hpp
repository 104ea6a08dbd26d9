#pragma once

#include <cstdint>

#include "recseg/net/tensor.hpp"

// Building blocks of the segmentation network. Convolutions lower to
// im2col + GEMM over bounded chunks of output slices.
namespace recseg::net::ops {

struct ConvShape {
  int in_channels;
  int out_channels;
  int kernel;  // 1 or 3
  int stride;  // 1 or 2
  int pad() const noexcept { return kernel / 2; }
};

Shape3 conv_output_shape(const Shape3& in, const ConvShape& c);

/// out = W * in + b. `weight` is [out][in][k][k][k].
template <typename T>
Tensor<T> conv_forward(const Tensor<T>& in, const T* weight, const T* bias, const ConvShape& c);

/// Accumulates dL/dW and dL/db; returns dL/din when `need_input_grad`.
template <typename T>
Tensor<T> conv_backward(const Tensor<T>& in, const T* weight, const Tensor<T>& dout, const ConvShape& c, T* dweight,
                        T* dbias, bool need_input_grad);

template <typename T>
void leaky_relu(Tensor<T>& t, T slope);
/// g *= (y > 0 ? 1 : slope), with y the activation output.
template <typename T>
void leaky_relu_backward(Tensor<T>& g, const Tensor<T>& y, T slope);

/// Inverted dropout: each element survives with probability 1 - rate and is
/// scaled by 1 / (1 - rate). The mask is a pure function of (seed, index).
template <typename T>
Tensor<T> dropout(const Tensor<T>& in, double rate, std::uint64_t seed);
template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& g, double rate, std::uint64_t seed);

/// Nearest-neighbor x2 upsampling ("copy each voxel twice per axis").
template <typename T>
Tensor<T> upsample2(const Tensor<T>& in);
template <typename T>
Tensor<T> upsample2_backward(const Tensor<T>& g, const Shape3& in_shape);

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b);
/// Splits a gradient of concat(a, b) into its two halves.
template <typename T>
void split(const Tensor<T>& g, std::int64_t first_channels, Tensor<T>& ga, Tensor<T>& gb);

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b);

/// Per-voxel softmax across channels.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

}  // namespace recseg::net::ops
