#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "recseg/grid.hpp"

namespace recseg::net {

/// Channel-major 4D array (C, Z, Y, X).
template <typename T>
struct Tensor {
  std::int64_t channels = 0;
  Shape3 shape{};
  std::vector<T> data;

  Tensor() = default;
  Tensor(std::int64_t c, Shape3 s, T fill = T{}) : channels(c), shape(s), data(static_cast<std::size_t>(c) * s.voxels(), fill) {}

  std::size_t plane() const noexcept { return shape.voxels(); }
  T* channel(std::int64_t c) noexcept { return data.data() + static_cast<std::size_t>(c) * plane(); }
  const T* channel(std::int64_t c) const noexcept { return data.data() + static_cast<std::size_t>(c) * plane(); }
  T& at(std::int64_t c, std::size_t v) noexcept { return data[static_cast<std::size_t>(c) * plane() + v]; }
  const T& at(std::int64_t c, std::size_t v) const noexcept { return data[static_cast<std::size_t>(c) * plane() + v]; }
};

}  // namespace recseg::net
