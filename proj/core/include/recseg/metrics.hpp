#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "recseg/grid.hpp"

namespace recseg {

/// Boolean voxel mask with the spacing of its source label map.
struct BinaryMask {
  Shape3 shape{};
  Vec3 spacing{1.0, 1.0, 1.0};
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(Shape3 s, Vec3 sp) : shape(s), spacing(sp), bits(s.voxels(), 0) {}

  std::uint8_t& at(std::int64_t z, std::int64_t y, std::int64_t x) {
    return bits[static_cast<std::size_t>((z * shape.y + y) * shape.x + x)];
  }
  std::uint8_t at(std::int64_t z, std::int64_t y, std::int64_t x) const {
    return bits[static_cast<std::size_t>((z * shape.y + y) * shape.x + x)];
  }
  std::size_t count() const;
  bool empty() const { return count() == 0; }
};

BinaryMask class_mask(const LabelMap& l, std::uint8_t c);
/// Union of all foreground classes.
BinaryMask foreground_mask(const LabelMap& l);

struct Point3 {
  double z, y, x;
};

/// |a ∩ b| / ((|a| + |b|) / 2); 1.0 when both are empty.
double dice(const BinaryMask& a, const BinaryMask& b);

/// Mask of true voxels with at least one 6-neighbor false or outside the array.
BinaryMask boundary_mask(const BinaryMask& m);
/// Centers (index * spacing, mm) of the boundary voxels in raster order.
std::vector<Point3> boundary_voxels(const BinaryMask& m);

/// Mean of nearest-boundary distances in both directions over |A| + |B|.
/// Throws UndefinedMetricError when either mask is empty.
double asd(const BinaryMask& a, const BinaryMask& b);
/// Symmetric Hausdorff distance between boundary sets, mm.
double hausdorff(const BinaryMask& a, const BinaryMask& b);

/// Keeps the largest 26-connected component of each foreground class
/// (ties: the component reached first in raster order); the rest becomes
/// background.
LabelMap largest_component(const LabelMap& l);

struct MetricTriple {
  double dsc = 0.0;
  std::optional<double> hd_mm;   // empty when undefined (an operand is empty)
  std::optional<double> asd_mm;

  bool defined() const { return hd_mm.has_value() && asd_mm.has_value(); }
};

enum class MetricClass { kHumerus, kScapula, kBoth };
inline constexpr MetricClass kMetricClasses[] = {MetricClass::kHumerus, MetricClass::kScapula, MetricClass::kBoth};
const char* to_string(MetricClass c);
MetricClass parse_metric_class(const std::string& s);

struct Evaluation {
  MetricTriple humerus;
  MetricTriple scapula;
  MetricTriple both;

  const MetricTriple& operator[](MetricClass c) const;
};

MetricTriple evaluate_masks(const BinaryMask& pred, const BinaryMask& truth);

/// Optionally applies largest_component to `pred`, then scores humerus,
/// scapula and their union. Throws ArgumentError on geometry mismatch.
Evaluation evaluate(const LabelMap& pred, const LabelMap& truth, bool postprocess = true);

/// One (group, subject, round, class) row. `group` is the fold (crossval) or
/// the subset size (size study).
struct MetricsRow {
  std::string group;
  std::string subject;
  int round = 0;
  MetricClass cls = MetricClass::kBoth;
  MetricTriple m;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;

  void add(const std::string& group, const std::string& subject, int round, const Evaluation& e);
  void append(const MetricsReport& other);
  std::vector<std::string> groups() const;  // in first-appearance order
  std::vector<int> rounds() const;          // ascending
  MetricsReport filter_group(const std::string& group) const;
};

/// Mean over subjects for one (round, class); HD and ASD average only the
/// defined rows and are empty if none are defined.
MetricTriple mean_metrics(const MetricsReport& r, int round, MetricClass c);

/// CSV: group,subject,round,class,dsc,hd_mm,asd_mm,defined (full precision).
void write_metrics_csv(const MetricsReport& r, const std::filesystem::path& path);
std::string metrics_csv(const MetricsReport& r);
MetricsReport read_metrics_csv(const std::filesystem::path& path);

/// Per-group blocks of rounds x (Humerus, Scapula, Both) x (DSC, HD, ASD)
/// means, values rounded to 2 decimals, followed by a cross-group mean block.
std::string metrics_markdown(const MetricsReport& r, const std::string& group_prefix);

}  // namespace recseg
