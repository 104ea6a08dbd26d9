#include "recseg/net/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "recseg/errors.hpp"
#include "recseg/net/ops.hpp"
#include "recseg/random.hpp"
#include "fp_env.hpp"

namespace recseg::net {

const char* to_string(Dtype d) { return d == Dtype::kF64 ? "f64" : "f32"; }

Dtype parse_dtype(const std::string& s) {
  if (s == "f32") return Dtype::kF32;
  if (s == "f64") return Dtype::kF64;
  throw FormatError("dtype", "expected f32 or f64, got '" + s + "'");
}

void NetworkConfig::validate() const {
  if (in_channels != 1) throw ArgumentError("network: in_channels must be 1");
  if (num_classes != kNumClasses) throw ArgumentError("network: num_classes must be 3");
  if (base_filters < 2) throw ArgumentError("network: base_filters must be >= 2");
  if (depth != 2) throw ArgumentError("network: depth must be 2");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ArgumentError("network: dropout_rate must lie in [0, 1)");
}

// Layer indices into layer_specs(); parameters are stored as weight, bias per layer.
namespace {

enum Layer : int {
  kEnc0Conv1,
  kEnc0Conv2,
  kEnc0Proj,
  kDown1,
  kEnc1Conv1,
  kEnc1Conv2,
  kDown2,
  kBottomConv1,
  kBottomConv2,
  kUp1Conv,
  kLoc1Conv3,
  kLoc1Conv1,
  kUp0Conv,
  kLoc0Conv3,
  kLoc0Conv1,
  kHead,
  kLayerCount
};

// Dropout sites, used as tags when deriving mask seeds.
enum DropSite : std::uint64_t { kDropEnc0 = 1, kDropEnc1 = 2, kDropBottom = 3 };

}  // namespace

std::vector<ConvSpec> layer_specs(const NetworkConfig& config) {
  config.validate();
  const int b = config.base_filters;
  return {
      {"enc0.conv1", config.in_channels, b, 3, 1},
      {"enc0.conv2", b, b, 3, 1},
      {"enc0.proj", config.in_channels, b, 1, 1},
      {"down1", b, 2 * b, 3, 2},
      {"enc1.conv1", 2 * b, 2 * b, 3, 1},
      {"enc1.conv2", 2 * b, 2 * b, 3, 1},
      {"down2", 2 * b, 4 * b, 3, 2},
      {"bottom.conv1", 4 * b, 4 * b, 3, 1},
      {"bottom.conv2", 4 * b, 4 * b, 3, 1},
      {"up1.conv", 4 * b, 2 * b, 3, 1},
      {"loc1.conv3", 4 * b, 2 * b, 3, 1},
      {"loc1.conv1", 2 * b, 2 * b, 1, 1},
      {"up0.conv", 2 * b, b, 3, 1},
      {"loc0.conv3", 2 * b, b, 3, 1},
      {"loc0.conv1", b, b, 1, 1},
      {"head", b, config.num_classes, 1, 1},
  };
}

std::size_t parameter_count(const NetworkConfig& config) {
  std::size_t n = 0;
  for (const auto& s : layer_specs(config)) {
    n += static_cast<std::size_t>(s.out_channels) * s.in_channels * s.kernel * s.kernel * s.kernel + s.out_channels;
  }
  return n;
}

template <typename T>
std::size_t NetworkParameters<T>::count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.values.size();
  return n;
}

template <typename T>
const NamedTensor<T>& NetworkParameters<T>::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw ArgumentError("no parameter tensor named '" + name + "'");
}

template <typename T>
NamedTensor<T>& NetworkParameters<T>::find(const std::string& name) {
  return const_cast<NamedTensor<T>&>(std::as_const(*this).find(name));
}

template <typename T>
std::uint64_t NetworkParameters<T>::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tensors) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.values.data());
    for (std::size_t i = 0; i < t.values.size() * sizeof(T); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

template <typename T>
NetworkParameters<T> NetworkParameters<T>::zeros_like() const {
  NetworkParameters out = *this;
  for (auto& t : out.tensors) std::fill(t.values.begin(), t.values.end(), T{});
  return out;
}

WeightMap one_hot(const LabelMap& l) {
  validate_labels(l);
  WeightMap w(kNumClasses, l.shape());
  for (std::size_t v = 0; v < l.size(); ++v) w.at(l[v], v) = 1.0f;
  return w;
}

WeightMap combined_target(const LabelMap& a, const LabelMap& b) {
  if (a.shape() != b.shape()) throw ArgumentError("combined_target: label shapes differ");
  WeightMap w = one_hot(a);
  validate_labels(b);
  for (std::size_t v = 0; v < b.size(); ++v) w.at(b[v], v) += 1.0f;
  return w;
}

template <typename T>
NetworkParameters<T> build(const NetworkConfig& config, std::uint64_t seed) {
  NetworkParameters<T> p;
  p.config = config;
  Rng rng(seed);
  for (const auto& s : layer_specs(config)) {
    const std::int64_t fan_in = std::int64_t{s.in_channels} * s.kernel * s.kernel * s.kernel;
    NamedTensor<T> w{s.name + ".weight", {s.out_channels, s.in_channels, s.kernel, s.kernel, s.kernel}, {}};
    w.values.resize(static_cast<std::size_t>(s.out_channels * fan_in));
    if (s.name != "head") {
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (auto& v : w.values) v = static_cast<T>(rng.uniform(-bound, bound));
    }
    NamedTensor<T> bias{s.name + ".bias", {s.out_channels}, std::vector<T>(static_cast<std::size_t>(s.out_channels))};
    p.tensors.push_back(std::move(w));
    p.tensors.push_back(std::move(bias));
  }
  return p;
}

void check_input_shape(const Shape3& s) {
  if (s.z % 4 != 0 || s.y % 4 != 0 || s.x % 4 != 0) {
    throw ArgumentError("network input " + to_string(s) + " must have every axis divisible by 4");
  }
}

namespace {

template <typename T>
struct Activations {
  Tensor<T> x;
  Tensor<T> e0a, e0a_d, e0b, e0;
  Tensor<T> d1, e1a, e1a_d, e1b, e1;
  Tensor<T> d2, ba, ba_d, bb, bt;
  Tensor<T> u1, u1c, c1, l1a, l1;
  Tensor<T> u0, u0c, c0, l0a, l0;
  Tensor<T> probabilities;
};

template <typename T>
ops::ConvShape conv_shape(const ConvSpec& s) {
  return {s.in_channels, s.out_channels, s.kernel, s.stride};
}

template <typename T>
class Graph {
 public:
  Graph(const NetworkParameters<T>& p, Mode mode, std::uint64_t seed)
      : p_(p), specs_(layer_specs(p.config)), train_(mode == Mode::kTrain), seed_(seed) {}

  void forward(const Volume& x, Activations<T>& a) const {
    check_input_shape(x.shape());
    const T slope = static_cast<T>(kLeakySlope);
    a.x = Tensor<T>(1, x.shape());
    std::copy(x.storage().begin(), x.storage().end(), a.x.data.begin());

    auto act = [&](int layer, const Tensor<T>& in) {
      Tensor<T> t = conv(layer, in);
      ops::leaky_relu(t, slope);
      return t;
    };

    a.e0a = act(kEnc0Conv1, a.x);
    a.e0a_d = drop(a.e0a, kDropEnc0);
    a.e0b = act(kEnc0Conv2, a.e0a_d);
    a.e0 = conv(kEnc0Proj, a.x);
    ops::add_inplace(a.e0, a.e0b);

    a.d1 = act(kDown1, a.e0);
    a.e1a = act(kEnc1Conv1, a.d1);
    a.e1a_d = drop(a.e1a, kDropEnc1);
    a.e1b = act(kEnc1Conv2, a.e1a_d);
    a.e1 = a.e1b;
    ops::add_inplace(a.e1, a.d1);

    a.d2 = act(kDown2, a.e1);
    a.ba = act(kBottomConv1, a.d2);
    a.ba_d = drop(a.ba, kDropBottom);
    a.bb = act(kBottomConv2, a.ba_d);
    a.bt = a.bb;
    ops::add_inplace(a.bt, a.d2);

    a.u1 = ops::upsample2(a.bt);
    a.u1c = act(kUp1Conv, a.u1);
    a.c1 = ops::concat(a.u1c, a.e1);
    a.l1a = act(kLoc1Conv3, a.c1);
    a.l1 = act(kLoc1Conv1, a.l1a);

    a.u0 = ops::upsample2(a.l1);
    a.u0c = act(kUp0Conv, a.u0);
    a.c0 = ops::concat(a.u0c, a.e0);
    a.l0a = act(kLoc0Conv3, a.c0);
    a.l0 = act(kLoc0Conv1, a.l0a);

    a.probabilities = ops::softmax(conv(kHead, a.l0));
  }

  // `g` is dL/dlogits; accumulates into `grads`.
  void backward(const Activations<T>& a, Tensor<T> g, NetworkParameters<T>& grads) const {
    const T slope = static_cast<T>(kLeakySlope);
    // Gradient through an activated conv: g is dL/d(output after leaky relu).
    auto act_back = [&](int layer, const Tensor<T>& in, const Tensor<T>& out, Tensor<T> go, bool need_input = true) {
      ops::leaky_relu_backward(go, out, slope);
      return conv_back(layer, in, go, grads, need_input);
    };

    Tensor<T> g_l0 = conv_back(kHead, a.l0, g, grads, true);
    Tensor<T> g_l0a = act_back(kLoc0Conv1, a.l0a, a.l0, std::move(g_l0));
    Tensor<T> g_c0 = act_back(kLoc0Conv3, a.c0, a.l0a, std::move(g_l0a));
    Tensor<T> g_u0c, g_e0;
    ops::split(g_c0, a.u0c.channels, g_u0c, g_e0);
    Tensor<T> g_u0 = act_back(kUp0Conv, a.u0, a.u0c, std::move(g_u0c));
    Tensor<T> g_l1 = ops::upsample2_backward(g_u0, a.l1.shape);

    Tensor<T> g_l1a = act_back(kLoc1Conv1, a.l1a, a.l1, std::move(g_l1));
    Tensor<T> g_c1 = act_back(kLoc1Conv3, a.c1, a.l1a, std::move(g_l1a));
    Tensor<T> g_u1c, g_e1;
    ops::split(g_c1, a.u1c.channels, g_u1c, g_e1);
    Tensor<T> g_u1 = act_back(kUp1Conv, a.u1, a.u1c, std::move(g_u1c));
    Tensor<T> g_bt = ops::upsample2_backward(g_u1, a.bt.shape);

    // Bottom residual block: bt = bb + d2.
    Tensor<T> g_bad = act_back(kBottomConv2, a.ba_d, a.bb, g_bt);
    Tensor<T> g_ba = drop_back(g_bad, kDropBottom);
    Tensor<T> g_d2 = act_back(kBottomConv1, a.d2, a.ba, std::move(g_ba));
    ops::add_inplace(g_d2, g_bt);
    ops::add_inplace(g_e1, act_back(kDown2, a.e1, a.d2, std::move(g_d2)));

    // Level-1 residual block: e1 = e1b + d1.
    Tensor<T> g_e1ad = act_back(kEnc1Conv2, a.e1a_d, a.e1b, g_e1);
    Tensor<T> g_e1a = drop_back(g_e1ad, kDropEnc1);
    Tensor<T> g_d1 = act_back(kEnc1Conv1, a.d1, a.e1a, std::move(g_e1a));
    ops::add_inplace(g_d1, g_e1);
    ops::add_inplace(g_e0, act_back(kDown1, a.e0, a.d1, std::move(g_d1)));

    // Level-0 residual block: e0 = e0b + proj(x). No gradient w.r.t. the input image.
    conv_back(kEnc0Proj, a.x, g_e0, grads, false);
    Tensor<T> g_e0ad = act_back(kEnc0Conv2, a.e0a_d, a.e0b, g_e0);
    Tensor<T> g_e0a = drop_back(g_e0ad, kDropEnc0);
    act_back(kEnc0Conv1, a.x, a.e0a, std::move(g_e0a), false);
  }

 private:
  Tensor<T> conv(int layer, const Tensor<T>& in) const {
    return ops::conv_forward(in, p_.tensors[2 * layer].values.data(), p_.tensors[2 * layer + 1].values.data(),
                             conv_shape<T>(specs_[layer]));
  }

  Tensor<T> conv_back(int layer, const Tensor<T>& in, const Tensor<T>& dout, NetworkParameters<T>& grads,
                      bool need_input) const {
    return ops::conv_backward(in, p_.tensors[2 * layer].values.data(), dout, conv_shape<T>(specs_[layer]),
                              grads.tensors[2 * layer].values.data(), grads.tensors[2 * layer + 1].values.data(),
                              need_input);
  }

  double rate() const { return train_ ? p_.config.dropout_rate : 0.0; }
  Tensor<T> drop(const Tensor<T>& t, DropSite site) const {
    return ops::dropout(t, rate(), derive_seed(seed_, {site}));
  }
  Tensor<T> drop_back(const Tensor<T>& g, DropSite site) const {
    return ops::dropout_backward(g, rate(), derive_seed(seed_, {site}));
  }

  const NetworkParameters<T>& p_;
  std::vector<ConvSpec> specs_;
  bool train_;
  std::uint64_t seed_;
};

void check_target(const Shape3& s, const Target& target) {
  const Shape3 ts = std::holds_alternative<LabelMap>(target) ? std::get<LabelMap>(target).shape()
                                                             : std::get<WeightMap>(target).shape;
  if (ts != s) throw ArgumentError("loss: target shape " + to_string(ts) + " differs from " + to_string(s));
  if (const auto* w = std::get_if<WeightMap>(&target)) {
    if (w->channels != kNumClasses) throw ArgumentError("loss: weight map must have 3 channels");
    for (float v : w->data) {
      if (!(v >= 0.0f)) throw ArgumentError("loss: weight map entries must be nonnegative");
    }
  }
}

// Target weight of class c at voxel v.
inline double weight_at(const Target& target, int c, std::size_t v) {
  if (const auto* l = std::get_if<LabelMap>(&target)) return (*l)[v] == c ? 1.0 : 0.0;
  return std::get<WeightMap>(target).at(c, v);
}

}  // namespace

template <typename T>
Tensor<T> forward(const NetworkParameters<T>& params, const Volume& x, Mode mode, std::uint64_t seed) {
  const FlushDenormals ftz;
  Activations<T> a;
  Graph<T>(params, mode, seed).forward(x, a);
  return std::move(a.probabilities);
}

template <typename T>
std::uint64_t rectifier_pattern(const NetworkParameters<T>& params, const Volume& x, Mode mode, std::uint64_t seed) {
  const FlushDenormals ftz;
  Activations<T> a;
  Graph<T>(params, mode, seed).forward(x, a);
  std::uint64_t h = 1469598103934665603ULL;
  for (const Tensor<T>* t : {&a.e0a, &a.e0b, &a.d1, &a.e1a, &a.e1b, &a.d2, &a.ba, &a.bb, &a.u1c, &a.l1a, &a.l1,
                             &a.u0c, &a.l0a, &a.l0}) {
    for (T v : t->data) {
      h ^= v < T(0) ? 1u : (v == T(0) ? 2u : 3u);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

template <typename T>
std::vector<double> voxel_losses(const Tensor<T>& probabilities, const Target& target) {
  check_target(probabilities.shape, target);
  const std::size_t n = probabilities.plane();
  std::vector<double> out(n, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    double s = 0.0;
    for (int c = 0; c < kNumClasses; ++c) {
      const double w = weight_at(target, c, v);
      if (w != 0.0) s -= w * std::log(std::max(static_cast<double>(probabilities.at(c, v)), kProbabilityFloor));
    }
    out[v] = s;
  }
  return out;
}

template <typename T>
double loss(const Tensor<T>& probabilities, const Target& target) {
  const auto l = voxel_losses(probabilities, target);
  double s = 0.0;
  for (double v : l) s += v;
  return s / static_cast<double>(l.size());
}

template <typename T>
GradientResult<T> backward(const NetworkParameters<T>& params, const Volume& x, const Target& target, Mode mode,
                           std::uint64_t seed) {
  const FlushDenormals ftz;
  Graph<T> graph(params, mode, seed);
  Activations<T> a;
  graph.forward(x, a);
  check_target(a.probabilities.shape, target);

  GradientResult<T> r;
  r.loss = loss(a.probabilities, target);
  r.gradients = params.zeros_like();

  // dL/dz_k = (p_k * sum_c w_c - w_k) / V, dropping classes whose log was clamped.
  const Tensor<T>& p = a.probabilities;
  const std::size_t n = p.plane();
  const double inv_v = 1.0 / static_cast<double>(n);
  Tensor<T> g(kNumClasses, p.shape);
  for (std::size_t v = 0; v < n; ++v) {
    double w[kNumClasses];
    double total = 0.0;
    for (int c = 0; c < kNumClasses; ++c) {
      w[c] = static_cast<double>(p.at(c, v)) >= kProbabilityFloor ? weight_at(target, c, v) : 0.0;
      total += w[c];
    }
    for (int c = 0; c < kNumClasses; ++c) {
      g.at(c, v) = static_cast<T>((static_cast<double>(p.at(c, v)) * total - w[c]) * inv_v);
    }
  }
  graph.backward(a, std::move(g), r.gradients);
  r.probabilities = std::move(a.probabilities);
  return r;
}

template <typename T>
LabelMap argmax_labels(const Tensor<T>& scores, const Volume& like) {
  if (scores.shape != like.shape()) throw ArgumentError("argmax: score shape differs from reference volume");
  LabelMap out = grid_like<std::uint8_t>(like);
  const std::size_t n = scores.plane();
  for (std::size_t v = 0; v < n; ++v) {
    int best = 0;
    for (int c = 1; c < scores.channels; ++c) {
      if (scores.at(c, v) > scores.at(best, v)) best = c;
    }
    out[v] = static_cast<std::uint8_t>(best);
  }
  return out;
}

template <typename T>
LabelMap predict(const NetworkParameters<T>& params, const Volume& x) {
  return argmax_labels(forward(params, x, Mode::kEval), x);
}

#define RECSEG_INSTANTIATE_NETWORK(T)                                                                          \
  template struct NetworkParameters<T>;                                                                        \
  template NetworkParameters<T> build<T>(const NetworkConfig&, std::uint64_t);                                 \
  template Tensor<T> forward(const NetworkParameters<T>&, const Volume&, Mode, std::uint64_t);                 \
  template std::uint64_t rectifier_pattern(const NetworkParameters<T>&, const Volume&, Mode, std::uint64_t);   \
  template std::vector<double> voxel_losses(const Tensor<T>&, const Target&);                                  \
  template double loss(const Tensor<T>&, const Target&);                                                       \
  template GradientResult<T> backward(const NetworkParameters<T>&, const Volume&, const Target&, Mode,         \
                                      std::uint64_t);                                                          \
  template LabelMap argmax_labels(const Tensor<T>&, const Volume&);                                            \
  template LabelMap predict(const NetworkParameters<T>&, const Volume&);

RECSEG_INSTANTIATE_NETWORK(float)
RECSEG_INSTANTIATE_NETWORK(double)

}  // namespace recseg::net
