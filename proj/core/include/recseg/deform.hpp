#pragma once

#include <cstdint>
#include <vector>

#include "recseg/grid.hpp"
#include "recseg/preprocess.hpp"

namespace recseg {

/// Cubic B-spline free-form deformation on a regular control grid.
/// Control point (k, j, i) sits at `grid_origin + (k, j, i) * control_spacing`
/// and stores a (dz, dy, dx) displacement in mm.
struct DeformationField {
  Vec3 control_spacing{24.0, 24.0, 24.0};
  Shape3 grid{};
  Vec3 grid_origin{};
  std::vector<double> displacements;  // 3 components per control point, control points z-major
  std::uint64_t seed = 0;

  std::size_t point(std::int64_t k, std::int64_t j, std::int64_t i) const noexcept {
    return static_cast<std::size_t>((k * grid.y + j) * grid.x + i);
  }
  double& disp(std::int64_t k, std::int64_t j, std::int64_t i, int axis) noexcept {
    return displacements[3 * point(k, j, i) + axis];
  }
  double disp(std::int64_t k, std::int64_t j, std::int64_t i, int axis) const noexcept {
    return displacements[3 * point(k, j, i) + axis];
  }
  bool operator==(const DeformationField&) const = default;
};

struct DeformParams {
  Vec3 control_spacing_mm{24.0, 24.0, 24.0};
  double max_disp_mm = 6.0;
};

/// Control displacements uniform in [-max_disp, +max_disp] per axis. The grid
/// has one margin point before and two after the volume extent on each axis,
/// the support a cubic basis needs at every voxel.
DeformationField sample_field(Shape3 shape, Vec3 spacing, Vec3 origin, Vec3 control_spacing_mm,
                              double max_disp_mm, std::uint64_t seed);

template <typename T>
DeformationField sample_field_for(const Grid<T>& g, const DeformParams& p, std::uint64_t seed) {
  return sample_field(g.shape(), g.spacing(), g.origin(), p.control_spacing_mm, p.max_disp_mm, seed);
}

/// Backward warp: out(p) = in(p + u(p)), with u the B-spline interpolated
/// displacement; clamp-to-edge outside the input.
Volume warp(const Volume& v, const DeformationField& f, Interp mode = Interp::kTrilinear);
LabelMap warp(const LabelMap& l, const DeformationField& f);

struct DistortedPair {
  SubjectRecord subject;
  DeformationField field;
};

/// Samples one field and applies it to the image (trilinear) and to the label
/// and clean label (nearest).
DistortedPair distort_pair(const SubjectRecord& s, const DeformParams& params, std::uint64_t seed);

}  // namespace recseg
