#include <benchmark/benchmark.h>

#include <cstdint>

#include "recseg/distance_transform.hpp"
#include "recseg/metrics.hpp"
#include "recseg/net/network.hpp"
#include "recseg/net/ops.hpp"
#include "recseg/preprocess.hpp"
#include "recseg/random.hpp"
#include "recseg/synthgen.hpp"

namespace {

using namespace recseg;

net::Tensor<float> random_tensor(std::int64_t c, Shape3 s, std::uint64_t seed) {
  net::Tensor<float> t(c, s);
  Rng rng(seed);
  for (auto& v : t.data) v = static_cast<float>(rng.uniform() - 0.5);
  return t;
}

Volume random_image(Shape3 s, std::uint64_t seed) {
  Volume v(s, Vec3{1.75, 2, 2});
  Rng rng(seed);
  for (auto& x : v.storage()) x = static_cast<float>(rng.uniform());
  return v;
}

// args: channels, stride
void BM_ConvForward(benchmark::State& state) {
  const int ch = static_cast<int>(state.range(0));
  const net::ops::ConvShape c{ch, ch, 3, static_cast<int>(state.range(1))};
  const auto in = random_tensor(ch, Shape3{32, 48, 48}, 1);
  const auto w = random_tensor(1, Shape3{ch * ch, 27, 1}, 2);
  std::vector<float> b(ch, 0.0f);
  for (auto _ : state) benchmark::DoNotOptimize(net::ops::conv_forward(in, w.data.data(), b.data(), c));
}
BENCHMARK(BM_ConvForward)->Args({4, 1})->Args({8, 1})->Args({8, 2})->Unit(benchmark::kMillisecond);

void BM_ConvBackward(benchmark::State& state) {
  const int ch = static_cast<int>(state.range(0));
  const net::ops::ConvShape c{ch, ch, 3, 1};
  const auto in = random_tensor(ch, Shape3{32, 48, 48}, 1);
  const auto w = random_tensor(1, Shape3{ch * ch, 27, 1}, 2);
  const auto dout = random_tensor(ch, Shape3{32, 48, 48}, 3);
  std::vector<float> dw(w.data.size()), db(ch);
  for (auto _ : state) {
    benchmark::DoNotOptimize(net::ops::conv_backward(in, w.data.data(), dout, c, dw.data(), db.data(), true));
  }
}
BENCHMARK(BM_ConvBackward)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

// args: base filters
void BM_NetworkForward(benchmark::State& state) {
  net::NetworkConfig cfg;
  cfg.base_filters = static_cast<int>(state.range(0));
  const auto params = net::build<float>(cfg, 1);
  const Volume x = random_image(Shape3{32, 48, 48}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(net::forward(params, x, net::Mode::kEval));
}
BENCHMARK(BM_NetworkForward)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_NetworkBackward(benchmark::State& state) {
  net::NetworkConfig cfg;
  cfg.base_filters = static_cast<int>(state.range(0));
  const auto params = net::build<float>(cfg, 1);
  const Volume x = random_image(Shape3{32, 48, 48}, 4);
  LabelMap y(x.shape(), x.spacing());
  Rng rng(5);
  for (auto& v : y.storage()) v = static_cast<std::uint8_t>(rng.below(3));
  const net::Target t = y;
  for (auto _ : state) benchmark::DoNotOptimize(net::backward(params, x, t, net::Mode::kTrain, 7));
}
BENCHMARK(BM_NetworkBackward)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_DistanceTransform(benchmark::State& state) {
  const Shape3 s{80, 144, 144};
  std::vector<std::uint8_t> sites(s.voxels(), 0);
  Rng rng(6);
  for (int i = 0; i < 200; ++i) sites[rng.below(sites.size())] = 1;
  for (auto _ : state) benchmark::DoNotOptimize(squared_distance_transform(sites, s, Vec3{1, 1, 1}));
}
BENCHMARK(BM_DistanceTransform)->Unit(benchmark::kMillisecond);

void BM_EvaluatePhantom(benchmark::State& state) {
  PhantomSpec spec;
  spec.seed = 3;
  const SubjectRecord s = generate_subject(spec);
  const LabelMap noisy = corrupt_labels(s.label, CorruptionSpec{1.0, 2.0, 0.0}, 9);
  const bool post = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(noisy, s.label, post));
}
BENCHMARK(BM_EvaluatePhantom)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_GeneratePhantom(benchmark::State& state) {
  PhantomSpec spec;
  for (auto _ : state) {
    ++spec.seed;
    benchmark::DoNotOptimize(generate_subject(spec));
  }
}
BENCHMARK(BM_GeneratePhantom)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
