#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "recseg/errors.hpp"
#include "recseg/volume_io.hpp"
#include "test_support.hpp"

using namespace recseg;
namespace fs = std::filesystem;

TEST(Grid, RejectsEmptyDimensionsAndNonPositiveSpacing) {
  EXPECT_THROW(Volume(Shape3{0, 4, 4}), ArgumentError);
  EXPECT_THROW(Volume(Shape3{4, 4, 4}, Vec3{1, 0, 1}), ArgumentError);
  EXPECT_THROW(Volume(Shape3{4, 4, 4}, Vec3{1, 1, -2}), ArgumentError);
}

TEST(Grid, IndexingIsZMajor) {
  Volume v(Shape3{2, 3, 4});
  v(1, 2, 3) = 5.0f;
  EXPECT_EQ(v.index(1, 2, 3), 23u);
  EXPECT_EQ(v[23], 5.0f);
  EXPECT_EQ(v.position(1, 0, 2).x, 2.0);
}

TEST(Grid, ParseShapeIsInPlaneFirst) {
  const Shape3 s = parse_shape_xyz("144x144x80");
  EXPECT_EQ(s.z, 80);
  EXPECT_EQ(s.y, 144);
  EXPECT_EQ(s.x, 144);
  EXPECT_THROW(parse_shape_xyz("144x144"), FormatError);
  EXPECT_THROW(parse_shape_xyz("0x4x4"), FormatError);
  EXPECT_THROW(parse_shape_xyz("4x4x4x"), FormatError);
}

TEST(Grid, ValidateLabelsRejectsOutOfRangeClass) {
  LabelMap l(Shape3{2, 2, 2});
  EXPECT_NO_THROW(validate_labels(l));
  l(1, 1, 1) = 3;
  EXPECT_THROW(validate_labels(l), IntegrityError);
}

TEST(VolumeIo, ZeroVolumeRoundTrip) {
  const auto dir = fixtures::temp_dir("io_zero");
  Volume v(Shape3{4, 4, 4});
  write_volume(v, dir / "zero.vol");
  EXPECT_EQ(read_volume(dir / "zero.vol"), v);
}

TEST(VolumeIo, RandomDataAndClinicalSpacingRoundTripExactly) {
  const auto dir = fixtures::temp_dir("io_spacing");
  Volume v = fixtures::random_volume(Shape3{3, 5, 7}, 11, Vec3{4.5, 0.9615, 0.9615});
  v.set_origin(Vec3{-12.25, 0.1, 1.0 / 3.0});
  v[0] = -0.0f;
  v[1] = 1e-38f;
  write_volume(v, dir / "v.vol");
  const Volume r = read_volume(dir / "v.vol");
  EXPECT_EQ(r.spacing(), v.spacing());
  EXPECT_EQ(r.origin(), v.origin());
  ASSERT_EQ(r.shape(), v.shape());
  EXPECT_EQ(std::memcmp(r.data().data(), v.data().data(), v.size() * sizeof(float)), 0);
}

TEST(VolumeIo, LabelRoundTrip) {
  const auto dir = fixtures::temp_dir("io_label");
  LabelMap l = fixtures::ball_label(Shape3{6, 6, 6}, Vec3{1, 1, 1}, 2.0, kScapula);
  l(0, 0, 0) = kHumerus;
  write_labels(l, dir / "l.vol");
  EXPECT_EQ(read_labels(dir / "l.vol"), l);
}

TEST(VolumeIo, ShortPayloadIsIntegrityError) {
  const auto dir = fixtures::temp_dir("io_short");
  write_volume(Volume(Shape3{4, 4, 4}), dir / "v.vol");
  fs::resize_file(dir / "v.raw", 63 * sizeof(float));
  try {
    read_volume(dir / "v.vol");
    FAIL() << "expected IntegrityError";
  } catch (const IntegrityError& e) {
    EXPECT_NE(std::string(e.what()).find("63 values"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("64"), std::string::npos) << e.what();
  }
}

namespace {

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string field_of(const fs::path& p) {
  try {
    read_volume(p);
  } catch (const FormatError& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST(VolumeIo, MalformedHeadersNameTheField) {
  const auto dir = fixtures::temp_dir("io_bad");
  const std::string good_tail = "origin 0 0 0\ndtype f32\nkind image\npayload v.raw\n";
  write_text(dir / "a.vol", "NOT-A-VOLUME\n");
  EXPECT_EQ(field_of(dir / "a.vol"), "magic");
  write_text(dir / "b.vol", "RECSEG-VOLUME 1\ndims 4 x 4\nspacing 1 1 1\n" + good_tail);
  EXPECT_EQ(field_of(dir / "b.vol"), "dims");
  write_text(dir / "c.vol", "RECSEG-VOLUME 1\ndims 4 4 4\nspacing 1 0 1\n" + good_tail);
  EXPECT_EQ(field_of(dir / "c.vol"), "spacing");
  write_text(dir / "d.vol", "RECSEG-VOLUME 1\ndims 4 4 4\nspacing 1 1 1\norigin 0 0 0\ndtype f16\nkind image\npayload v.raw\n");
  EXPECT_EQ(field_of(dir / "d.vol"), "dtype");
  write_text(dir / "e.vol", "RECSEG-VOLUME 1\ndims 4 4 4\nspacing 1 1 1\n" + good_tail + "colour red\n");
  EXPECT_EQ(field_of(dir / "e.vol"), "colour");
  write_text(dir / "f.vol", "RECSEG-VOLUME 1\ndims 4 4 4\n" + good_tail);
  EXPECT_EQ(field_of(dir / "f.vol"), "spacing");
}

TEST(VolumeIo, LabelsReadRequireLabelKind) {
  const auto dir = fixtures::temp_dir("io_kind");
  write_volume(Volume(Shape3{2, 2, 2}), dir / "v.vol");
  EXPECT_THROW(read_labels(dir / "v.vol"), FormatError);
}

TEST(VolumeIo, SubjectsRoundTripThroughManifest) {
  const auto dir = fixtures::temp_dir("io_manifest");
  SubjectRecord a;
  a.subject_id = "subj_000";
  a.image = fixtures::random_volume(Shape3{2, 3, 4}, 1, Vec3{2, 1, 1});
  a.label = grid_like<std::uint8_t>(a.image);
  a.label(1, 1, 1) = kHumerus;
  a.fold = 3;
  a.corrupted = true;
  a.clean_label = grid_like<std::uint8_t>(a.image);
  SubjectRecord b = a;
  b.subject_id = "subj_001";
  b.fold = 1;
  b.corrupted = false;
  b.clean_label.reset();
  write_subjects({a, b}, dir);
  const auto back = read_subjects(dir / "manifest.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].subject_id, "subj_000");
  EXPECT_EQ(back[0].image, a.image);
  EXPECT_EQ(back[0].label, a.label);
  EXPECT_EQ(back[0].fold, 3);
  EXPECT_TRUE(back[0].corrupted);
  ASSERT_TRUE(back[0].clean_label.has_value());
  EXPECT_EQ(*back[0].clean_label, *a.clean_label);
  EXPECT_FALSE(back[1].clean_label.has_value());
  EXPECT_EQ(back[1].fold, 1);
}

TEST(VolumeIo, ManifestMissingColumnIsFormatError) {
  const auto dir = fixtures::temp_dir("io_manifest_bad");
  write_text(dir / "m.csv", "subject_id,image,fold\nx,a.vol,0\n");
  try {
    read_manifest(dir / "m.csv");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.field(), "label");
  }
}

TEST(VolumeIo, FormatDoubleRoundTripsShortest) {
  for (double v : {0.1, 1.0 / 3.0, 4.5, 0.9615, 1e-300, -2.5e17}) {
    EXPECT_EQ(parse_double(format_double(v), "x"), v);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_TRUE(std::isnan(parse_double("nan", "x")));
  EXPECT_THROW(parse_double("1.5mm", "x"), FormatError);
}
