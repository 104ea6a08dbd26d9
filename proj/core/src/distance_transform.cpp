#include "recseg/distance_transform.hpp"

#include <limits>

namespace recseg {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// One lower-envelope pass over a line of n samples with spacing w.
void envelope_1d(const double* f, std::int64_t n, double w, double* d, std::int64_t* v, double* z) {
  std::int64_t k = -1;
  for (std::int64_t q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    const double xq = static_cast<double>(q) * w;
    double s;
    for (;;) {
      const double xv = static_cast<double>(v[k]) * w;
      s = ((f[q] + xq * xq) - (f[v[k]] + xv * xv)) / (2.0 * (xq - xv));
      if (s > z[k] || k == 0) break;
      --k;
    }
    if (s <= z[k]) {
      // k == 0 and the new parabola dominates everywhere to the right of -inf.
      v[0] = q;
      z[1] = kInf;
      continue;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    for (std::int64_t p = 0; p < n; ++p) d[p] = kInf;
    return;
  }
  std::int64_t j = 0;
  for (std::int64_t p = 0; p < n; ++p) {
    const double xp = static_cast<double>(p) * w;
    while (z[j + 1] < xp) ++j;
    const double dx = static_cast<double>(p - v[j]) * w;
    d[p] = dx * dx + f[v[j]];
  }
}

void pass(std::vector<double>& data, const Shape3& s, int axis, double w) {
  const std::int64_t n = axis == 0 ? s.z : axis == 1 ? s.y : s.x;
  const std::int64_t stride = axis == 0 ? s.y * s.x : axis == 1 ? s.x : 1;
  const std::int64_t lines = static_cast<std::int64_t>(s.voxels()) / n;
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<std::int64_t> v(n);
  for (std::int64_t l = 0; l < lines; ++l) {
    const std::int64_t base = axis == 2 ? l * n : axis == 1 ? (l / s.x) * s.y * s.x + (l % s.x) : l;
    for (std::int64_t i = 0; i < n; ++i) f[i] = data[base + i * stride];
    envelope_1d(f.data(), n, w, d.data(), v.data(), z.data());
    for (std::int64_t i = 0; i < n; ++i) data[base + i * stride] = d[i];
  }
}

}  // namespace

std::vector<double> squared_distance_transform(std::span<const std::uint8_t> sites, Shape3 shape,
                                               Vec3 spacing, bool in_plane_only) {
  if (sites.size() != shape.voxels()) throw ArgumentError("distance transform: site count does not match shape");
  std::vector<double> data(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) data[i] = sites[i] ? 0.0 : kInf;
  pass(data, shape, 2, spacing.x);
  pass(data, shape, 1, spacing.y);
  if (!in_plane_only) pass(data, shape, 0, spacing.z);
  return data;
}

}  // namespace recseg
