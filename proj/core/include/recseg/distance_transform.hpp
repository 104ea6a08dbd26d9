#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "recseg/grid.hpp"

namespace recseg {

/// Exact squared Euclidean distance transform in mm^2 (lower-envelope
/// algorithm of Felzenszwalb and Huttenlocher, separable over the axes).
/// Every voxel receives the squared distance to the nearest nonzero `sites`
/// voxel center; +inf when there are no sites. With `in_plane_only` the z
/// pass is skipped, giving per-slice 2D distances.
std::vector<double> squared_distance_transform(std::span<const std::uint8_t> sites, Shape3 shape,
                                               Vec3 spacing, bool in_plane_only = false);

}  // namespace recseg
