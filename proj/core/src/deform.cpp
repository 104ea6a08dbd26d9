#include "recseg/deform.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "recseg/random.hpp"

namespace recseg {
namespace {

struct AxisBasis {
  std::int64_t first;        // first of the four supporting control points
  std::array<double, 4> w;   // cubic B-spline weights
};

std::vector<AxisBasis> axis_basis(std::int64_t n, double spacing, double origin, double grid_origin,
                                  double control_spacing, std::int64_t grid_n) {
  std::vector<AxisBasis> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const double u = (origin + i * spacing - grid_origin) / control_spacing;
    const double base = std::floor(u);
    const double t = u - base;
    const auto first = static_cast<std::int64_t>(base) - 1;
    if (first < 0 || first + 3 > grid_n - 1) {
      throw ArgumentError("deformation field does not cover the volume extent");
    }
    const double t2 = t * t, t3 = t2 * t;
    out[static_cast<std::size_t>(i)] = AxisBasis{
        first,
        {(1.0 - t) * (1.0 - t) * (1.0 - t) / 6.0, (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
         (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0, t3 / 6.0}};
  }
  return out;
}

template <typename T>
Grid<T> warp_impl(const Grid<T>& v, const DeformationField& f, Interp mode) {
  const Shape3 s = v.shape();
  const Vec3 sp = v.spacing();
  const Vec3 o = v.origin();
  const auto bz = axis_basis(s.z, sp.z, o.z, f.grid_origin.z, f.control_spacing.z, f.grid.z);
  const auto by = axis_basis(s.y, sp.y, o.y, f.grid_origin.y, f.control_spacing.y, f.grid.y);
  const auto bx = axis_basis(s.x, sp.x, o.x, f.grid_origin.x, f.control_spacing.x, f.grid.x);

  Grid<T> out(s, sp, o);
  auto clamp_pos = [](double p, std::int64_t n) { return std::clamp(p, 0.0, static_cast<double>(n - 1)); };
  for (std::int64_t k = 0; k < s.z; ++k) {
    for (std::int64_t j = 0; j < s.y; ++j) {
      for (std::int64_t i = 0; i < s.x; ++i) {
        double d[3] = {0.0, 0.0, 0.0};
        for (int a = 0; a < 4; ++a) {
          for (int b = 0; b < 4; ++b) {
            const double wzy = bz[k].w[a] * by[j].w[b];
            for (int c = 0; c < 4; ++c) {
              const double w = wzy * bx[i].w[c];
              const double* disp = &f.displacements[3 * f.point(bz[k].first + a, by[j].first + b, bx[i].first + c)];
              d[0] += w * disp[0];
              d[1] += w * disp[1];
              d[2] += w * disp[2];
            }
          }
        }
        const double pz = clamp_pos(k + d[0] / sp.z, s.z);
        const double py = clamp_pos(j + d[1] / sp.y, s.y);
        const double px = clamp_pos(i + d[2] / sp.x, s.x);
        if (mode == Interp::kNearest) {
          out(k, j, i) = v(static_cast<std::int64_t>(std::floor(pz + 0.5)), static_cast<std::int64_t>(std::floor(py + 0.5)),
                           static_cast<std::int64_t>(std::floor(px + 0.5)));
          continue;
        }
        const auto z0 = static_cast<std::int64_t>(std::floor(pz));
        const auto y0 = static_cast<std::int64_t>(std::floor(py));
        const auto x0 = static_cast<std::int64_t>(std::floor(px));
        const std::int64_t z1 = std::min(z0 + 1, s.z - 1), y1 = std::min(y0 + 1, s.y - 1), x1 = std::min(x0 + 1, s.x - 1);
        const double fz = pz - z0, fy = py - y0, fx = px - x0;
        auto lerp = [](double a, double b, double t) { return a * (1.0 - t) + b * t; };
        auto line = [&](std::int64_t z, std::int64_t y) { return lerp(v(z, y, x0), v(z, y, x1), fx); };
        const double c0 = lerp(line(z0, y0), line(z0, y1), fy);
        const double c1 = lerp(line(z1, y0), line(z1, y1), fy);
        out(k, j, i) = static_cast<T>(lerp(c0, c1, fz));
      }
    }
  }
  return out;
}

}  // namespace

DeformationField sample_field(Shape3 shape, Vec3 spacing, Vec3 origin, Vec3 cs, double max_disp_mm,
                              std::uint64_t seed) {
  if (!(cs.z > 0 && cs.y > 0 && cs.x > 0)) throw ArgumentError("control spacing must be strictly positive");
  if (!(max_disp_mm >= 0.0)) throw ArgumentError("max displacement must be >= 0");
  auto count = [](std::int64_t n, double sp, double c) {
    return static_cast<std::int64_t>(std::floor((n - 1) * sp / c)) + 4;
  };
  DeformationField f;
  f.control_spacing = cs;
  f.grid = Shape3{count(shape.z, spacing.z, cs.z), count(shape.y, spacing.y, cs.y), count(shape.x, spacing.x, cs.x)};
  f.grid_origin = Vec3{origin.z - cs.z, origin.y - cs.y, origin.x - cs.x};
  f.seed = seed;
  f.displacements.resize(3 * f.grid.voxels());
  Rng rng(derive_seed(seed, {0x4646u}));
  for (auto& d : f.displacements) d = max_disp_mm == 0.0 ? 0.0 : max_disp_mm * (2.0 * rng.uniform() - 1.0);
  return f;
}

Volume warp(const Volume& v, const DeformationField& f, Interp mode) { return warp_impl(v, f, mode); }

LabelMap warp(const LabelMap& l, const DeformationField& f) { return warp_impl(l, f, Interp::kNearest); }

DistortedPair distort_pair(const SubjectRecord& s, const DeformParams& params, std::uint64_t seed) {
  validate_subject(s);
  DistortedPair out{SubjectRecord{}, sample_field_for(s.image, params, seed)};
  auto& d = out.subject;
  d.subject_id = s.subject_id;
  d.fold = s.fold;
  d.source = s.source;
  d.corrupted = s.corrupted;
  d.image = warp(s.image, out.field, Interp::kTrilinear);
  d.label = warp(s.label, out.field);
  if (s.clean_label) d.clean_label = warp(*s.clean_label, out.field);
  d.provenance = "distorted-from(" + s.subject_id + ", " + std::to_string(seed) + ")";
  return out;
}

}  // namespace recseg
