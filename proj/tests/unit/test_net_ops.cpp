#include <gtest/gtest.h>

#include <cmath>

#include "recseg/net/ops.hpp"
#include "recseg/random.hpp"

using namespace recseg;
using namespace recseg::net;

namespace {

Tensor<double> random_tensor(std::int64_t c, Shape3 s, std::uint64_t seed) {
  Tensor<double> t(c, s);
  Rng rng(seed);
  for (auto& v : t.data) v = rng.uniform(-1, 1);
  return t;
}

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  std::vector<double> v(n);
  Rng rng(seed);
  for (auto& x : v) x = rng.uniform(-1, 1);
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Direct zero-padded cross-correlation.
Tensor<double> naive_conv(const Tensor<double>& in, const std::vector<double>& w, const std::vector<double>& b,
                          const ops::ConvShape& c) {
  const Shape3 os = ops::conv_output_shape(in.shape, c);
  Tensor<double> out(c.out_channels, os);
  const int k = c.kernel, p = c.pad();
  for (int o = 0; o < c.out_channels; ++o)
    for (std::int64_t z = 0; z < os.z; ++z)
      for (std::int64_t y = 0; y < os.y; ++y)
        for (std::int64_t x = 0; x < os.x; ++x) {
          double s = b[o];
          for (int i = 0; i < c.in_channels; ++i)
            for (int a = 0; a < k; ++a)
              for (int bb = 0; bb < k; ++bb)
                for (int d = 0; d < k; ++d) {
                  const std::int64_t zz = z * c.stride + a - p, yy = y * c.stride + bb - p, xx = x * c.stride + d - p;
                  if (zz < 0 || yy < 0 || xx < 0 || zz >= in.shape.z || yy >= in.shape.y || xx >= in.shape.x) continue;
                  s += w[(((o * c.in_channels + i) * k + a) * k + bb) * k + d] *
                       in.at(i, static_cast<std::size_t>((zz * in.shape.y + yy) * in.shape.x + xx));
                }
          out.at(o, static_cast<std::size_t>((z * os.y + y) * os.x + x)) = s;
        }
  return out;
}

struct ConvCase {
  ops::ConvShape c;
  Shape3 s;
};

class ConvTest : public ::testing::TestWithParam<ConvCase> {};

}  // namespace

TEST_P(ConvTest, ForwardMatchesDirectSum) {
  const auto [c, s] = GetParam();
  const auto in = random_tensor(c.in_channels, s, 1);
  const auto w = random_vector(static_cast<std::size_t>(c.out_channels * c.in_channels * c.kernel * c.kernel * c.kernel), 2);
  const auto b = random_vector(static_cast<std::size_t>(c.out_channels), 3);
  const auto got = ops::conv_forward(in, w.data(), b.data(), c);
  const auto want = naive_conv(in, w, b, c);
  ASSERT_EQ(got.shape, want.shape);
  ASSERT_EQ(got.channels, want.channels);
  for (std::size_t i = 0; i < got.data.size(); ++i) ASSERT_NEAR(got.data[i], want.data[i], 1e-12) << i;
}

TEST_P(ConvTest, BackwardIsTheAdjoint) {
  // <conv(x) - b, g> = <x, dx> and = <W, dW> since the map is bilinear in (x, W).
  const auto [c, s] = GetParam();
  const auto in = random_tensor(c.in_channels, s, 4);
  const std::size_t nw = static_cast<std::size_t>(c.out_channels * c.in_channels * c.kernel * c.kernel * c.kernel);
  const auto w = random_vector(nw, 5);
  const std::vector<double> zero_b(static_cast<std::size_t>(c.out_channels), 0.0);
  const auto out = ops::conv_forward(in, w.data(), zero_b.data(), c);
  const auto g = random_tensor(c.out_channels, out.shape, 6);
  std::vector<double> dw(nw, 0.0), db(static_cast<std::size_t>(c.out_channels), 0.0);
  const auto dx = ops::conv_backward(in, w.data(), g, c, dw.data(), db.data(), true);
  const double lhs = dot(out.data, g.data);
  EXPECT_NEAR(lhs, dot(in.data, dx.data), 1e-9 * std::max(1.0, std::abs(lhs)));
  EXPECT_NEAR(lhs, dot(w, dw), 1e-9 * std::max(1.0, std::abs(lhs)));
  for (int o = 0; o < c.out_channels; ++o) {
    double sum = 0;
    for (std::size_t v = 0; v < g.plane(); ++v) sum += g.at(o, v);
    EXPECT_NEAR(db[static_cast<std::size_t>(o)], sum, 1e-12);
  }
}

TEST_P(ConvTest, BackwardAccumulatesIntoExistingGradients) {
  const auto [c, s] = GetParam();
  const auto in = random_tensor(c.in_channels, s, 7);
  const std::size_t nw = static_cast<std::size_t>(c.out_channels * c.in_channels * c.kernel * c.kernel * c.kernel);
  const auto w = random_vector(nw, 8);
  const auto g = random_tensor(c.out_channels, ops::conv_output_shape(s, c), 9);
  std::vector<double> once(nw, 0.0), twice(nw, 0.0), db(static_cast<std::size_t>(c.out_channels), 0.0);
  ops::conv_backward(in, w.data(), g, c, once.data(), db.data(), false);
  ops::conv_backward(in, w.data(), g, c, twice.data(), db.data(), false);
  ops::conv_backward(in, w.data(), g, c, twice.data(), db.data(), false);
  for (std::size_t i = 0; i < nw; ++i) EXPECT_NEAR(twice[i], 2 * once[i], 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Shapes, ConvTest,
                         ::testing::Values(ConvCase{{2, 3, 3, 1}, {4, 5, 6}}, ConvCase{{3, 2, 3, 2}, {4, 6, 8}},
                                           ConvCase{{4, 3, 1, 1}, {3, 4, 5}}, ConvCase{{1, 2, 3, 1}, {1, 1, 7}},
                                           ConvCase{{2, 2, 3, 2}, {2, 2, 2}}));

TEST(ConvShapes, StrideTwoHalvesEvenExtents) {
  EXPECT_EQ(ops::conv_output_shape(Shape3{8, 12, 16}, {1, 1, 3, 2}), (Shape3{4, 6, 8}));
  EXPECT_EQ(ops::conv_output_shape(Shape3{8, 12, 16}, {1, 1, 3, 1}), (Shape3{8, 12, 16}));
}

TEST(Conv, FloatAgreesWithDouble) {
  const ops::ConvShape c{3, 4, 3, 1};
  const auto in = random_tensor(3, Shape3{5, 6, 7}, 10);
  const auto w = random_vector(4 * 3 * 27, 11);
  const auto b = random_vector(4, 12);
  Tensor<float> inf(3, in.shape);
  for (std::size_t i = 0; i < in.data.size(); ++i) inf.data[i] = static_cast<float>(in.data[i]);
  std::vector<float> wf(w.begin(), w.end()), bf(b.begin(), b.end());
  const auto d = ops::conv_forward(in, w.data(), b.data(), c);
  const auto f = ops::conv_forward(inf, wf.data(), bf.data(), c);
  for (std::size_t i = 0; i < d.data.size(); ++i) EXPECT_NEAR(f.data[i], d.data[i], 1e-4);
}

TEST(LeakyRelu, ForwardAndBackward) {
  Tensor<double> t(1, Shape3{1, 1, 4});
  t.data = {-2.0, -0.5, 0.0, 3.0};
  ops::leaky_relu(t, 0.01);
  EXPECT_EQ(t.data, (std::vector<double>{-0.02, -0.005, 0.0, 3.0}));
  Tensor<double> g(1, t.shape, 1.0);
  ops::leaky_relu_backward(g, t, 0.01);
  EXPECT_EQ(g.data, (std::vector<double>{0.01, 0.01, 0.01, 1.0}));
}

TEST(Dropout, DeterministicScaledAndSelfAdjoint) {
  Tensor<double> t(2, Shape3{8, 8, 8}, 1.0);
  const auto a = ops::dropout(t, 0.3, 5);
  EXPECT_EQ(a.data, ops::dropout(t, 0.3, 5).data);
  EXPECT_NE(a.data, ops::dropout(t, 0.3, 6).data);
  std::size_t kept = 0;
  for (double v : a.data) {
    if (v != 0.0) {
      EXPECT_DOUBLE_EQ(v, 1.0 / 0.7);
      ++kept;
    }
  }
  const double frac = static_cast<double>(kept) / static_cast<double>(a.data.size());
  EXPECT_NEAR(frac, 0.7, 0.05);
  EXPECT_EQ(ops::dropout_backward(t, 0.3, 5).data, a.data);
  EXPECT_EQ(ops::dropout(t, 0.0, 5).data, t.data);
}

TEST(Upsample, CopiesAndBackwardIsAdjoint) {
  const auto x = random_tensor(2, Shape3{2, 3, 4}, 13);
  const auto u = ops::upsample2(x);
  EXPECT_EQ(u.shape, (Shape3{4, 6, 8}));
  EXPECT_EQ(u.at(1, (3 * 6 + 5) * 8 + 7), x.at(1, (1 * 3 + 2) * 4 + 3));
  const auto g = random_tensor(2, u.shape, 14);
  EXPECT_NEAR(dot(u.data, g.data), dot(x.data, ops::upsample2_backward(g, x.shape).data), 1e-12);
}

TEST(Concat, SplitInvertsConcat) {
  const auto a = random_tensor(2, Shape3{2, 2, 2}, 15), b = random_tensor(3, Shape3{2, 2, 2}, 16);
  const auto c = ops::concat(a, b);
  EXPECT_EQ(c.channels, 5);
  Tensor<double> ga, gb;
  ops::split(c, 2, ga, gb);
  EXPECT_EQ(ga.data, a.data);
  EXPECT_EQ(gb.data, b.data);
}

TEST(Softmax, SumsToOneAndSurvivesLargeLogits) {
  auto t = random_tensor(3, Shape3{3, 3, 3}, 17);
  t.at(0, 0) = 800.0;
  t.at(1, 1) = -800.0;
  const auto p = ops::softmax(t);
  for (std::size_t v = 0; v < p.plane(); ++v) {
    double s = 0;
    for (int c = 0; c < 3; ++c) {
      EXPECT_TRUE(std::isfinite(p.at(c, v)));
      s += p.at(c, v);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_NEAR(p.at(0, 0), 1.0, 1e-12);
  Tensor<double> eq(3, Shape3{1, 1, 1}, 0.25);
  EXPECT_NEAR(ops::softmax(eq).at(2, 0), 1.0 / 3.0, 1e-15);
}
