#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "recseg/errors.hpp"

namespace recseg {

/// Number of segmentation classes: background, humerus, scapula.
inline constexpr int kNumClasses = 3;

enum Label : std::uint8_t { kBackground = 0, kHumerus = 1, kScapula = 2 };

/// Grid extent, stored slowest-first to match the (z, y, x) memory order.
struct Shape3 {
  std::int64_t z = 1;
  std::int64_t y = 1;
  std::int64_t x = 1;

  std::size_t voxels() const noexcept { return static_cast<std::size_t>(z * y * x); }
  bool operator==(const Shape3&) const = default;
};

/// A physical (z, y, x) triple in millimeters.
struct Vec3 {
  double z = 0.0;
  double y = 0.0;
  double x = 0.0;

  bool operator==(const Vec3&) const = default;
};

std::string to_string(const Shape3& s);
std::string to_string(const Vec3& v);

/// Parses "XxYxZ" (in-plane first, slices last), returning a (z, y, x) shape.
Shape3 parse_shape_xyz(const std::string& text);

/// Dense 3D grid with physical geometry. Voxel (0,0,0) is centered at
/// `origin`; voxel (k,j,i) at origin + (k,j,i) * spacing.
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  explicit Grid(Shape3 shape, Vec3 spacing = {1.0, 1.0, 1.0}, Vec3 origin = {}, T fill = T{})
      : shape_(shape), spacing_(spacing), origin_(origin) {
    if (shape.z < 1 || shape.y < 1 || shape.x < 1) {
      throw ArgumentError("grid dimensions must all be >= 1, got " + to_string(shape));
    }
    if (!(spacing.z > 0.0 && spacing.y > 0.0 && spacing.x > 0.0)) {
      throw ArgumentError("grid spacing must be strictly positive, got " + to_string(spacing));
    }
    data_.assign(shape.voxels(), fill);
  }

  const Shape3& shape() const noexcept { return shape_; }
  const Vec3& spacing() const noexcept { return spacing_; }
  const Vec3& origin() const noexcept { return origin_; }
  void set_origin(Vec3 o) noexcept { origin_ = o; }

  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  std::size_t index(std::int64_t z, std::int64_t y, std::int64_t x) const noexcept {
    return static_cast<std::size_t>((z * shape_.y + y) * shape_.x + x);
  }
  T& operator()(std::int64_t z, std::int64_t y, std::int64_t x) noexcept {
    return data_[index(z, y, x)];
  }
  const T& operator()(std::int64_t z, std::int64_t y, std::int64_t x) const noexcept {
    return data_[index(z, y, x)];
  }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Physical position of a voxel center.
  Vec3 position(std::int64_t z, std::int64_t y, std::int64_t x) const noexcept {
    return {origin_.z + z * spacing_.z, origin_.y + y * spacing_.y, origin_.x + x * spacing_.x};
  }

  template <typename U>
  bool same_geometry(const Grid<U>& o) const noexcept {
    return shape_ == o.shape() && spacing_ == o.spacing() && origin_ == o.origin();
  }

  bool operator==(const Grid& o) const {
    return same_geometry(o) && data_ == o.data_;
  }

 private:
  Shape3 shape_{};
  Vec3 spacing_{1.0, 1.0, 1.0};
  Vec3 origin_{};
  std::vector<T> data_;
};

using Volume = Grid<float>;
using LabelMap = Grid<std::uint8_t>;

/// Creates a grid of a different value type sharing `like`'s geometry.
template <typename U, typename T>
Grid<U> grid_like(const Grid<T>& like, U fill = U{}) {
  return Grid<U>(like.shape(), like.spacing(), like.origin(), fill);
}

/// Throws IntegrityError if any voxel lies outside {0, 1, 2}.
void validate_labels(const LabelMap& labels);

enum class SubjectSource { kSynthetic, kExternal };

/// One training/validation unit. `clean_label` holds the uncorrupted
/// annotation when the subject's stored label was deliberately corrupted
/// (always present for synthetic corpora).
struct SubjectRecord {
  std::string subject_id;
  Volume image;
  LabelMap label;
  int fold = 0;
  SubjectSource source = SubjectSource::kSynthetic;
  bool corrupted = false;
  std::optional<LabelMap> clean_label;
  std::string provenance;
};

/// Checks fold range and image/label pairing.
void validate_subject(const SubjectRecord& s);

}  // namespace recseg
