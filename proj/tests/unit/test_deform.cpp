#include <gtest/gtest.h>

#include <cmath>

#include "recseg/deform.hpp"
#include "recseg/metrics.hpp"
#include "recseg/synthgen.hpp"
#include "test_support.hpp"

using namespace recseg;

namespace {

DeformationField constant_field(const Volume& v, Vec3 d) {
  DeformationField f = sample_field(v.shape(), v.spacing(), v.origin(), Vec3{8, 8, 8}, 0.0, 0);
  for (std::int64_t k = 0; k < f.grid.z; ++k)
    for (std::int64_t j = 0; j < f.grid.y; ++j)
      for (std::int64_t i = 0; i < f.grid.x; ++i) {
        f.disp(k, j, i, 0) = d.z;
        f.disp(k, j, i, 1) = d.y;
        f.disp(k, j, i, 2) = d.x;
      }
  return f;
}

SubjectRecord small_subject() {
  PhantomSpec spec;
  spec.seed = 5;
  SubjectRecord s = generate_subject(spec);
  PreprocessConfig cfg{{1.75, 2, 2}, {32, 48, 48}, 25.0, false};
  return preprocess_subject(s, cfg);
}

}  // namespace

TEST(SampleField, GridCoversVolumeWithMargins) {
  const auto f = sample_field(Shape3{10, 20, 30}, Vec3{2, 1, 1}, Vec3{}, Vec3{6, 6, 6}, 3.0, 1);
  // Extent (18, 19, 29) mm over 6 mm cells: floor + 1 points plus 1 before and 2 after.
  EXPECT_EQ(f.grid, (Shape3{7, 7, 8}));
  EXPECT_EQ(f.grid_origin, (Vec3{-6, -6, -6}));
  EXPECT_EQ(f.displacements.size(), 3 * f.grid.voxels());
  for (double d : f.displacements) {
    EXPECT_LE(std::abs(d), 3.0);
  }
}

TEST(SampleField, SeedDeterminesField) {
  const Shape3 s{8, 8, 8};
  const auto a = sample_field(s, Vec3{1, 1, 1}, Vec3{}, Vec3{4, 4, 4}, 2.0, 10);
  EXPECT_EQ(a, sample_field(s, Vec3{1, 1, 1}, Vec3{}, Vec3{4, 4, 4}, 2.0, 10));
  EXPECT_NE(a.displacements, sample_field(s, Vec3{1, 1, 1}, Vec3{}, Vec3{4, 4, 4}, 2.0, 11).displacements);
}

TEST(Warp, ZeroFieldIsIdentity) {
  const Volume v = fixtures::random_volume(Shape3{6, 7, 8}, 3, Vec3{2, 1, 1});
  const auto f = sample_field_for(v, DeformParams{{4, 4, 4}, 0.0}, 1);
  const Volume w = warp(v, f);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(w[i], v[i], 1e-6);
  LabelMap l = fixtures::ball_label(v.shape(), v.spacing(), 3.0, kScapula);
  EXPECT_EQ(warp(l, f), l);
}

TEST(Warp, ConstantFieldTranslates) {
  Volume v(Shape3{4, 6, 16}, Vec3{1, 1, 1});
  for (std::int64_t z = 0; z < 4; ++z)
    for (std::int64_t y = 0; y < 6; ++y)
      for (std::int64_t x = 0; x < 16; ++x) v(z, y, x) = static_cast<float>(x * x + y);
  const Volume w = warp(v, constant_field(v, Vec3{0, 0, 2}));
  for (std::int64_t z = 0; z < 4; ++z)
    for (std::int64_t y = 0; y < 6; ++y)
      for (std::int64_t x = 0; x < 14; ++x) EXPECT_NEAR(w(z, y, x), v(z, y, x + 2), 1e-4);
  // Clamp to edge beyond the input.
  EXPECT_NEAR(w(0, 0, 15), v(0, 0, 15), 1e-4);
}

TEST(Warp, LabelsKeepValidClasses) {
  const SubjectRecord s = small_subject();
  const auto f = sample_field_for(s.label, DeformParams{{24, 24, 24}, 6.0}, 3);
  const LabelMap w = warp(s.label, f);
  EXPECT_NO_THROW(validate_labels(w));
  for (auto c : w.data()) EXPECT_LE(c, kScapula);
}

TEST(DistortPair, ImageAndLabelMoveTogether) {
  SubjectRecord s = small_subject();
  s.clean_label = s.label;
  const DeformParams p{{24, 24, 24}, 6.0};
  const DistortedPair d = distort_pair(s, p, 21);
  EXPECT_EQ(d.subject.image, warp(s.image, d.field));
  EXPECT_EQ(d.subject.label, warp(s.label, d.field));
  ASSERT_TRUE(d.subject.clean_label.has_value());
  EXPECT_EQ(*d.subject.clean_label, d.subject.label);
  EXPECT_EQ(d.field, sample_field_for(s.image, p, 21));
  // Bone voxels of the warped label still sit on bright voxels of the warped image.
  double bone = 0, back = 0;
  std::size_t nb = 0, nk = 0;
  for (std::size_t i = 0; i < d.subject.label.size(); ++i) {
    if (d.subject.label[i] == kHumerus) {
      bone += d.subject.image[i];
      ++nb;
    } else if (d.subject.label[i] == kBackground) {
      back += d.subject.image[i];
      ++nk;
    }
  }
  EXPECT_GT(bone / nb, back / nk + 0.2);
}

TEST(DistortPair, ModerateFieldChangesButPreservesShape) {
  const SubjectRecord s = small_subject();
  const DistortedPair d = distort_pair(s, DeformParams{{24, 24, 24}, 6.0}, 4);
  const double dsc = dice(foreground_mask(d.subject.label), foreground_mask(s.label));
  EXPECT_GT(dsc, 0.6);
  EXPECT_LT(dsc, 1.0);
  EXPECT_NE(distort_pair(s, DeformParams{{24, 24, 24}, 6.0}, 5).subject.label, d.subject.label);
}
