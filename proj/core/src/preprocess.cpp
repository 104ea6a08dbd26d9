#include "recseg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace recseg {
namespace {

struct AxisSample {
  std::int64_t i0;
  std::int64_t i1;
  double frac;
};

std::int64_t resampled_extent(std::int64_t n, double spacing, double target) {
  return std::max<std::int64_t>(1, std::llround(static_cast<double>(n) * spacing / target));
}

std::vector<AxisSample> axis_table(std::int64_t n_out, std::int64_t n_in, double ratio, Interp mode) {
  std::vector<AxisSample> t(static_cast<std::size_t>(n_out));
  for (std::int64_t i = 0; i < n_out; ++i) {
    const double pos = static_cast<double>(i) * ratio;
    AxisSample s{};
    if (mode == Interp::kNearest) {
      s.i0 = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(pos + 0.5)), 0, n_in - 1);
      s.i1 = s.i0;
      s.frac = 0.0;
    } else {
      const auto base = static_cast<std::int64_t>(std::floor(pos));
      if (base >= n_in - 1) {
        s.i0 = s.i1 = n_in - 1;
        s.frac = 0.0;
      } else {
        s.i0 = std::max<std::int64_t>(base, 0);
        s.i1 = s.i0 + 1;
        s.frac = base < 0 ? 0.0 : pos - static_cast<double>(base);
      }
    }
    t[static_cast<std::size_t>(i)] = s;
  }
  return t;
}

template <typename T>
Grid<T> resample_impl(const Grid<T>& v, Vec3 target, Interp mode) {
  if (!(target.z > 0 && target.y > 0 && target.x > 0)) {
    throw ArgumentError("target spacing must be strictly positive, got " + to_string(target));
  }
  const Shape3 in = v.shape();
  const Vec3 sp = v.spacing();
  const Shape3 out_shape{resampled_extent(in.z, sp.z, target.z), resampled_extent(in.y, sp.y, target.y),
                         resampled_extent(in.x, sp.x, target.x)};
  Grid<T> out(out_shape, target, v.origin());
  const auto tz = axis_table(out_shape.z, in.z, target.z / sp.z, mode);
  const auto ty = axis_table(out_shape.y, in.y, target.y / sp.y, mode);
  const auto tx = axis_table(out_shape.x, in.x, target.x / sp.x, mode);

  for (std::int64_t k = 0; k < out_shape.z; ++k) {
    const auto& az = tz[k];
    for (std::int64_t j = 0; j < out_shape.y; ++j) {
      const auto& ay = ty[j];
      for (std::int64_t i = 0; i < out_shape.x; ++i) {
        const auto& ax = tx[i];
        if (mode == Interp::kNearest) {
          out(k, j, i) = v(az.i0, ay.i0, ax.i0);
          continue;
        }
        auto lerp = [](double a, double b, double f) { return a * (1.0 - f) + b * f; };
        auto line = [&](std::int64_t z, std::int64_t y) {
          return lerp(v(z, y, ax.i0), v(z, y, ax.i1), ax.frac);
        };
        const double c0 = lerp(line(az.i0, ay.i0), line(az.i0, ay.i1), ay.frac);
        const double c1 = lerp(line(az.i1, ay.i0), line(az.i1, ay.i1), ay.frac);
        out(k, j, i) = static_cast<T>(lerp(c0, c1, az.frac));
      }
    }
  }
  return out;
}

std::int64_t window_offset(std::int64_t n, std::int64_t t) { return n >= t ? (n - t) / 2 : -((t - n) / 2); }

template <typename T>
Grid<T> crop_or_pad_impl(const Grid<T>& v, Shape3 target) {
  if (target.z < 1 || target.y < 1 || target.x < 1) {
    throw ArgumentError("target shape components must be >= 1, got " + to_string(target));
  }
  const Shape3 in = v.shape();
  const std::int64_t dz = window_offset(in.z, target.z);
  const std::int64_t dy = window_offset(in.y, target.y);
  const std::int64_t dx = window_offset(in.x, target.x);
  const Vec3 sp = v.spacing();
  const Vec3 o = v.origin();
  Grid<T> out(target, sp, Vec3{o.z + dz * sp.z, o.y + dy * sp.y, o.x + dx * sp.x}, T{});

  const std::int64_t x_lo = std::max<std::int64_t>(0, -dx);
  const std::int64_t x_hi = std::min<std::int64_t>(target.x, in.x - dx);
  if (x_lo >= x_hi) return out;
  for (std::int64_t k = 0; k < target.z; ++k) {
    const std::int64_t sk = k + dz;
    if (sk < 0 || sk >= in.z) continue;
    for (std::int64_t j = 0; j < target.y; ++j) {
      const std::int64_t sj = j + dy;
      if (sj < 0 || sj >= in.y) continue;
      std::copy_n(&v(sk, sj, x_lo + dx), x_hi - x_lo, &out(k, j, x_lo));
    }
  }
  return out;
}

// Separable 1D convolution along one axis with implicit zero padding.
void blur_axis(std::vector<double>& data, const Shape3& s, int axis, const std::vector<double>& kernel) {
  const std::int64_t radius = static_cast<std::int64_t>(kernel.size() / 2);
  const std::int64_t n = axis == 0 ? s.z : axis == 1 ? s.y : s.x;
  const std::int64_t stride = axis == 0 ? s.y * s.x : axis == 1 ? s.x : 1;
  const std::int64_t lines = static_cast<std::int64_t>(s.voxels()) / n;
  std::vector<double> line(static_cast<std::size_t>(n)), out(static_cast<std::size_t>(n));
  for (std::int64_t l = 0; l < lines; ++l) {
    std::int64_t base;
    if (axis == 2) {
      base = l * n;
    } else if (axis == 1) {
      base = (l / s.x) * s.y * s.x + (l % s.x);
    } else {
      base = l;
    }
    for (std::int64_t i = 0; i < n; ++i) line[i] = data[base + i * stride];
    for (std::int64_t i = 0; i < n; ++i) {
      const std::int64_t lo = std::max<std::int64_t>(0, i - radius);
      const std::int64_t hi = std::min<std::int64_t>(n - 1, i + radius);
      double acc = 0.0;
      for (std::int64_t q = lo; q <= hi; ++q) acc += kernel[q - i + radius] * line[q];
      out[i] = acc;
    }
    for (std::int64_t i = 0; i < n; ++i) data[base + i * stride] = out[i];
  }
}

std::vector<double> gaussian_kernel(double sigma_vox) {
  const auto radius = static_cast<std::int64_t>(std::ceil(3.0 * sigma_vox));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  for (std::int64_t i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma_vox * sigma_vox));
  }
  const double sum = std::accumulate(k.begin(), k.end(), 0.0);
  for (auto& w : k) w /= sum;
  return k;
}

}  // namespace

Volume resample(const Volume& v, Vec3 target_spacing, Interp mode) {
  return resample_impl(v, target_spacing, mode);
}

LabelMap resample(const LabelMap& l, Vec3 target_spacing) {
  return resample_impl(l, target_spacing, Interp::kNearest);
}

Volume crop_or_pad(const Volume& v, Shape3 target) { return crop_or_pad_impl(v, target); }
LabelMap crop_or_pad(const LabelMap& l, Shape3 target) { return crop_or_pad_impl(l, target); }

namespace {

Volume bias_pass(const Volume& v, double smoothing_sigma_mm) {
  const auto data = v.data();
  const auto [mn, mx] = std::minmax_element(data.begin(), data.end());
  if (*mn == *mx) return v;

  // Tissue mask: well above the background, relative to a robust maximum.
  std::vector<float> sorted(data.begin(), data.end());
  const std::size_t q = std::min(sorted.size() - 1, static_cast<std::size_t>(0.995 * sorted.size()));
  std::nth_element(sorted.begin(), sorted.begin() + q, sorted.end());
  const double robust_max = sorted[q];
  if (!(robust_max > 0.0)) return v;
  const double threshold = 0.1 * robust_max;

  const Shape3 s = v.shape();
  const std::size_t n = s.voxels();
  std::vector<double> logs(n, 0.0), weight(n, 0.0);
  double log_sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (data[i] > threshold) {
      logs[i] = std::log(static_cast<double>(data[i]));
      weight[i] = 1.0;
      log_sum += logs[i];
      ++count;
    }
  }
  if (count == 0) return v;
  const double mean_log = log_sum / static_cast<double>(count);

  const double sig[3] = {smoothing_sigma_mm / v.spacing().z, smoothing_sigma_mm / v.spacing().y,
                         smoothing_sigma_mm / v.spacing().x};
  for (int axis = 0; axis < 3; ++axis) {
    const auto kernel = gaussian_kernel(sig[axis]);
    blur_axis(logs, s, axis, kernel);
    blur_axis(weight, s, axis, kernel);
  }

  Volume out = v;
  double in_sum = 0.0, out_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double smoothed = weight[i] > 1e-8 ? logs[i] / weight[i] : mean_log;
    const double corrected = static_cast<double>(data[i]) / std::exp(smoothed - mean_log);
    out[i] = static_cast<float>(corrected);
    in_sum += data[i];
    out_sum += corrected;
  }
  if (std::abs(out_sum) > 0.0 && std::abs(in_sum) > 0.0) {
    const double scale = in_sum / out_sum;
    for (auto& x : out.data()) x = static_cast<float>(static_cast<double>(x) * scale);
  }
  return out;
}

}  // namespace

Volume correct_bias(const Volume& v, double smoothing_sigma_mm) {
  if (!(smoothing_sigma_mm > 0.0)) throw ArgumentError("bias smoothing sigma must be > 0");
  // A second pass removes most of the gain the first pass underestimates near the tissue boundary.
  constexpr int kPasses = 2;
  Volume out = v;
  for (int i = 0; i < kPasses; ++i) out = bias_pass(out, smoothing_sigma_mm);
  return out;
}

Volume normalize_intensity(const Volume& v) {
  Volume out = v;
  const auto data = v.data();
  const auto [mn, mx] = std::minmax_element(data.begin(), data.end());
  const double lo = *mn, hi = *mx;
  if (hi == lo) {
    std::fill(out.data().begin(), out.data().end(), 0.0f);
    return out;
  }
  const double range = hi - lo;
  for (std::size_t i = 0; i < data.size(); ++i) {
    out[i] = static_cast<float>((static_cast<double>(data[i]) - lo) / range);
  }
  return out;
}

SubjectRecord preprocess_subject(const SubjectRecord& s, const PreprocessConfig& cfg) {
  SubjectRecord out;
  out.subject_id = s.subject_id;
  out.fold = s.fold;
  out.source = s.source;
  out.corrupted = s.corrupted;
  out.provenance = s.provenance;

  Volume img = crop_or_pad(resample(s.image, cfg.target_spacing, Interp::kTrilinear), cfg.target_shape);
  if (cfg.bias_correction) img = correct_bias(img, cfg.bias_sigma_mm);
  out.image = normalize_intensity(img);
  out.label = crop_or_pad(resample(s.label, cfg.target_spacing), cfg.target_shape);
  if (s.clean_label) out.clean_label = crop_or_pad(resample(*s.clean_label, cfg.target_spacing), cfg.target_shape);
  return out;
}

}  // namespace recseg
