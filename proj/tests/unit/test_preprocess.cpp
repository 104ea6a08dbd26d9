#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "recseg/preprocess.hpp"
#include "recseg/synthgen.hpp"
#include "test_support.hpp"

using namespace recseg;

TEST(Resample, OutputExtentFollowsRoundedPhysicalSize) {
  Volume v(Shape3{4, 8, 8}, Vec3{4.5, 1, 1});
  const Volume r = resample(v, Vec3{1, 1, 1});
  EXPECT_EQ(r.shape(), (Shape3{18, 8, 8}));
  EXPECT_EQ(r.spacing(), (Vec3{1, 1, 1}));
  // Tiny extents never collapse below one voxel.
  EXPECT_EQ(resample(Volume(Shape3{1, 1, 1}, Vec3{0.1, 0.1, 0.1}), Vec3{5, 5, 5}).shape(), (Shape3{1, 1, 1}));
}

TEST(Resample, IdentitySpacingIsExact) {
  Volume v = fixtures::random_volume(Shape3{5, 6, 7}, 3, Vec3{2.5, 0.7, 0.7});
  v.set_origin(Vec3{1, 2, 3});
  EXPECT_EQ(resample(v, v.spacing()), v);
  EXPECT_EQ(resample(v, v.spacing(), Interp::kNearest), v);
}

TEST(Resample, IdempotentAtFixedSpacing) {
  const Volume v = fixtures::random_volume(Shape3{6, 9, 9}, 5, Vec3{3, 0.8, 0.8});
  const Volume once = resample(v, Vec3{1.3, 1.1, 1.1});
  const Volume twice = resample(once, Vec3{1.3, 1.1, 1.1});
  ASSERT_EQ(once.shape(), twice.shape());
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(once[i], twice[i], 1e-6);
}

TEST(Resample, PreservesOrigin) {
  Volume v(Shape3{4, 4, 4}, Vec3{2, 2, 2}, Vec3{-10, 5, 7.5});
  EXPECT_EQ(resample(v, Vec3{1, 1, 1}).origin(), v.origin());
}

TEST(Resample, TrilinearReproducesLinearFunctionsInside) {
  // Independent oracle: trilinear interpolation is exact on affine functions.
  const Vec3 sp{3.0, 1.5, 0.75};
  Volume v(Shape3{5, 6, 7}, sp);
  auto f = [](double z, double y, double x) { return 0.3 * z - 0.2 * y + 0.05 * x + 1.0; };
  for (std::int64_t z = 0; z < 5; ++z)
    for (std::int64_t y = 0; y < 6; ++y)
      for (std::int64_t x = 0; x < 7; ++x) v(z, y, x) = static_cast<float>(f(z * sp.z, y * sp.y, x * sp.x));
  const Vec3 t{1.1, 0.9, 1.3};
  const Volume r = resample(v, t);
  int checked = 0;
  for (std::int64_t z = 0; z < r.shape().z; ++z)
    for (std::int64_t y = 0; y < r.shape().y; ++y)
      for (std::int64_t x = 0; x < r.shape().x; ++x) {
        const double pz = z * t.z, py = y * t.y, px = x * t.x;
        if (pz > 4 * sp.z || py > 5 * sp.y || px > 6 * sp.x) continue;  // clamped region
        EXPECT_NEAR(r(z, y, x), f(pz, py, px), 1e-5);
        ++checked;
      }
  EXPECT_GT(checked, 100);
}

TEST(Resample, NearestLabelsOnlyContainInputValues) {
  LabelMap l(Shape3{3, 10, 10}, Vec3{4, 0.5, 0.5});
  for (std::int64_t y = 0; y < 10; ++y) l(1, y, 4) = kScapula;
  const LabelMap r = resample(l, Vec3{1, 1, 1});
  std::set<int> seen(r.data().begin(), r.data().end());
  EXPECT_TRUE(seen.count(kScapula));
  EXPECT_FALSE(seen.count(kHumerus));
}

TEST(CropOrPad, CentersCropOfLargerInput) {
  Volume v(Shape3{90, 160, 160}, Vec3{1, 1, 1}, Vec3{0, 0, 0});
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i % 9973);
  const Volume c = crop_or_pad(v, Shape3{80, 144, 144});
  EXPECT_EQ(c.shape(), (Shape3{80, 144, 144}));
  EXPECT_EQ(c(0, 0, 0), v(5, 8, 8));
  EXPECT_EQ(c(79, 143, 143), v(84, 151, 151));
  EXPECT_EQ(c.origin(), (Vec3{5, 8, 8}));
}

TEST(CropOrPad, IdentityWhenShapeMatches) {
  const Volume v = fixtures::random_volume(Shape3{8, 12, 12}, 2);
  EXPECT_EQ(crop_or_pad(v, v.shape()), v);
}

TEST(CropOrPad, PadsSymmetricallyWithZeros) {
  Volume v(Shape3{80, 100, 100}, Vec3{1, 1, 1}, Vec3{0, 0, 0}, 1.0f);
  const Volume p = crop_or_pad(v, Shape3{80, 144, 144});
  EXPECT_EQ(p(0, 22, 22), 1.0f);
  EXPECT_EQ(p(0, 21, 22), 0.0f);
  EXPECT_EQ(p(0, 121, 121), 1.0f);
  EXPECT_EQ(p(0, 122, 121), 0.0f);
  EXPECT_EQ(p.origin(), (Vec3{0, -22, -22}));
  // Retained voxels keep their physical positions.
  const Vec3 a = p.position(3, 22, 22), b = v.position(3, 0, 0);
  EXPECT_EQ(a, b);
}

TEST(CropOrPad, CropThenPadBackKeepsCenterWindow) {
  const Volume v = fixtures::random_volume(Shape3{10, 13, 11}, 9);
  const Volume back = crop_or_pad(crop_or_pad(v, Shape3{6, 7, 7}), v.shape());
  EXPECT_EQ(back.origin(), v.origin());
  for (std::int64_t z = 0; z < 10; ++z)
    for (std::int64_t y = 0; y < 13; ++y)
      for (std::int64_t x = 0; x < 11; ++x) {
        const bool inside = z >= 2 && z < 8 && y >= 3 && y < 10 && x >= 2 && x < 9;
        EXPECT_EQ(back(z, y, x), inside ? v(z, y, x) : 0.0f);
      }
}

TEST(CropOrPad, LabelsPadWithBackground) {
  LabelMap l(Shape3{2, 2, 2}, Vec3{1, 1, 1}, Vec3{}, kHumerus);
  const LabelMap p = crop_or_pad(l, Shape3{4, 4, 4});
  EXPECT_EQ(p(0, 0, 0), kBackground);
  EXPECT_EQ(p(1, 1, 1), kHumerus);
}

namespace {

// Body cylinder (0.4) with a bright ball (0.8) on a zero background.
Volume simple_phantom(Shape3 s, Vec3 sp) {
  Volume v(s, sp);
  const double cy = (s.y - 1) * sp.y / 2, cx = (s.x - 1) * sp.x / 2;
  for (std::int64_t z = 0; z < s.z; ++z)
    for (std::int64_t y = 0; y < s.y; ++y)
      for (std::int64_t x = 0; x < s.x; ++x) {
        const double dy = y * sp.y - cy, dx = x * sp.x - cx;
        if (std::hypot(dy, dx) < 0.45 * s.x * sp.x) v(z, y, x) = 0.4f;
        if (std::hypot(dy + 10, dx - 8, z * sp.z - s.z * sp.z / 2) < 12) v(z, y, x) = 0.8f;
      }
  return v;
}

}  // namespace

TEST(CorrectBias, FlatFieldIsLeftUnchanged) {
  Volume v(Shape3{16, 24, 24}, Vec3{2, 2, 2});
  for (std::int64_t z = 2; z < 14; ++z)
    for (std::int64_t y = 3; y < 21; ++y)
      for (std::int64_t x = 3; x < 21; ++x) v(z, y, x) = 0.6f;
  const Volume c = correct_bias(v, 25.0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_NEAR(c[i], v[i], 1e-6 * std::max(1.0f, v[i]));
  }
}

TEST(CorrectBias, ConstantVolumeIsUnchanged) {
  const Volume v(Shape3{4, 5, 6}, Vec3{1, 1, 1}, Vec3{}, 3.25f);
  EXPECT_EQ(correct_bias(v), v);
}

TEST(CorrectBias, RemovesMostOfATwoToOneGain) {
  const Shape3 s{24, 48, 48};
  const Vec3 sp{2, 2, 2};
  const Volume clean = simple_phantom(s, sp);
  Volume biased = clean;
  for (std::int64_t z = 0; z < s.z; ++z)
    for (std::int64_t y = 0; y < s.y; ++y)
      for (std::int64_t x = 0; x < s.x; ++x)
        biased(z, y, x) *= static_cast<float>(std::pow(2.0, static_cast<double>(x) / (s.x - 1)));

  // Gain ratio measured on the muscle class between the two lateral thirds.
  auto ratio = [&](const Volume& v) {
    double lo = 0, hi = 0;
    int nlo = 0, nhi = 0;
    for (std::int64_t z = 0; z < s.z; ++z)
      for (std::int64_t y = 0; y < s.y; ++y)
        for (std::int64_t x = 0; x < s.x; ++x) {
          if (clean(z, y, x) != 0.4f) continue;
          if (x < s.x / 3) {
            lo += v(z, y, x);
            ++nlo;
          } else if (x >= 2 * s.x / 3) {
            hi += v(z, y, x);
            ++nhi;
          }
        }
    return (hi / nhi) / (lo / nlo);
  };
  EXPECT_GT(ratio(biased), 1.4);
  const double after = ratio(correct_bias(biased, 25.0));
  EXPECT_LE(after, 1.2);
  EXPECT_GE(after, 1.0 / 1.2);
}

TEST(CorrectBias, PreservesMeanIntensity) {
  const Volume v = simple_phantom(Shape3{12, 24, 24}, Vec3{3, 3, 3});
  const Volume c = correct_bias(v, 25.0);
  double a = 0, b = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    a += v[i];
    b += c[i];
  }
  EXPECT_NEAR(a, b, 1e-4 * a);
}

TEST(Normalize, MapsToUnitRangeMonotonically) {
  Volume v(Shape3{1, 1, 5});
  const float vals[] = {200, 1800, 900, 1000, 250};
  for (int i = 0; i < 5; ++i) v[i] = vals[i];
  const Volume n = normalize_intensity(v);
  EXPECT_EQ(n[0], 0.0f);
  EXPECT_EQ(n[1], 1.0f);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j)
      if (vals[i] < vals[j]) EXPECT_LT(n[i], n[j]);
}

TEST(Normalize, ConstantMapsToZero) {
  const Volume v(Shape3{2, 2, 2}, Vec3{1, 1, 1}, Vec3{}, 7.0f);
  const Volume n = normalize_intensity(v);
  for (float x : n.data()) EXPECT_EQ(x, 0.0f);
}

TEST(PreprocessSubject, DeterministicAndLabelsStayInRange) {
  PhantomSpec spec;
  spec.seed = 4;
  const SubjectRecord s = generate_subject(spec);
  PreprocessConfig cfg{{1.75, 2, 2}, {32, 48, 48}, 25.0, true};
  const SubjectRecord a = preprocess_subject(s, cfg), b = preprocess_subject(s, cfg);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.label, b.label);
  EXPECT_EQ(a.image.shape(), (Shape3{32, 48, 48}));
  EXPECT_TRUE(a.image.same_geometry(a.label));
  EXPECT_NO_THROW(validate_labels(a.label));
  const auto [mn, mx] = std::minmax_element(a.image.data().begin(), a.image.data().end());
  EXPECT_EQ(*mn, 0.0f);
  EXPECT_EQ(*mx, 1.0f);
}
