#include "recseg/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "recseg/distance_transform.hpp"
#include "recseg/random.hpp"

namespace recseg {
namespace {

struct P3 {
  double x, y, z;
};
P3 operator+(P3 a, P3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
P3 operator-(P3 a, P3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
P3 operator*(double s, P3 a) { return {s * a.x, s * a.y, s * a.z}; }
double dot(P3 a, P3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
double norm2(P3 a) { return dot(a, a); }

// Distance-squared from p to segment [a, b].
double segment_dist2(P3 p, P3 a, P3 b) {
  const P3 ab = b - a;
  const double t = std::clamp(dot(p - a, ab) / norm2(ab), 0.0, 1.0);
  return norm2(p - (a + t * ab));
}

/// Implicit shoulder geometry in physical millimeters.
class ShoulderModel {
 public:
  ShoulderModel(const PhantomSpec& spec, P3 joint) : joint_(joint) {
    Rng rng(derive_seed(spec.seed, {0x5348u}));
    const double j = spec.shape_jitter;
    auto draw = [&](double mid, double half, double lo, double hi) {
      return std::clamp(mid + j * half * (2.0 * rng.uniform() - 1.0), lo, hi);
    };
    const double deg = std::numbers::pi / 180.0;
    head_r_ = draw(15.0, 3.0, 12.0, 18.0);
    gap_ = draw(5.0, 3.0, 2.0, 8.0);
    const double theta = draw(0.0, 20.0, -90.0, 90.0) * deg;
    const double tilt = draw(0.0, 8.0, -30.0, 30.0) * deg;
    thickness_ = draw(3.0, 1.0, 2.0, 4.0);
    const double psi = draw(40.0, 15.0, 10.0, 80.0) * deg;
    curvature_ = draw(0.008, 0.004, 0.0, 0.02);

    const P3 ex{std::cos(theta), std::sin(theta), 0.0};
    const P3 ey{-std::sin(theta), std::cos(theta), 0.0};
    const P3 ez{0.0, 0.0, 1.0};

    head_ = joint_ + (0.5 * gap_ + head_r_) * ex;
    shaft_r_ = 0.6 * head_r_;
    shaft_a_ = head_ + (0.25 * head_r_) * ex;
    const P3 down = (std::sin(tilt)) * ex - std::cos(tilt) * ez;
    shaft_b_ = shaft_a_ + 90.0 * down;

    glenoid_r_ = 0.85 * head_r_;
    glenoid_ = head_ - (head_r_ + gap_ + 0.5 * glenoid_r_) * ex;
    cup_r2_ = (head_r_ + gap_) * (head_r_ + gap_);

    plate_dir_ = (-std::cos(psi)) * ex - std::sin(psi) * ey;
    plate_normal_ = P3{-plate_dir_.y, plate_dir_.x, 0.0};
  }

  std::uint8_t classify(P3 p) const {
    if (norm2(p - head_) <= head_r_ * head_r_) return kHumerus;
    if (segment_dist2(p, shaft_a_, shaft_b_) <= shaft_r_ * shaft_r_) return kHumerus;
    if (norm2(p - head_) <= cup_r2_) return kBackground;
    if (norm2(p - glenoid_) <= glenoid_r_ * glenoid_r_) return kScapula;
    const P3 r = p - glenoid_;
    const double s = dot(r, plate_dir_);
    if (s < 0.0 || s > kPlateLength) return kBackground;
    const double u = dot(r, plate_normal_) - curvature_ * s * s;
    if (std::abs(u) > 0.5 * thickness_) return kBackground;
    const double half_height = 14.0 + 0.4 * s;
    return (r.z >= -half_height && r.z <= 0.7 * half_height) ? kScapula : kBackground;
  }

 private:
  static constexpr double kPlateLength = 70.0;
  P3 joint_;
  double head_r_, gap_, thickness_, curvature_, shaft_r_, glenoid_r_, cup_r2_;
  P3 head_, shaft_a_, shaft_b_, glenoid_, plate_dir_, plate_normal_;
};

}  // namespace

void validate(const PhantomSpec& s) {
  if (!(s.z_spacing_mm >= 1.0 && s.z_spacing_mm <= 4.5)) throw ArgumentError("z_spacing_mm outside [1.0, 4.5]");
  if (!(s.in_plane_spacing_mm >= 0.3125 && s.in_plane_spacing_mm <= 0.9615)) {
    throw ArgumentError("in_plane_spacing_mm outside [0.3125, 0.9615]");
  }
  const auto& c = s.contrast;
  for (double v : {c.bone_mean, c.muscle_mean, c.noise_sigma}) {
    if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("contrast components must lie in [0, 1]");
  }
  if (!(s.shape_jitter >= 0.0)) throw ArgumentError("shape_jitter must be >= 0");
  if (!(s.gain_log_amplitude >= 0.0)) throw ArgumentError("gain_log_amplitude must be >= 0");
  if (!(s.fov_mm.z > 0 && s.fov_mm.y > 0 && s.fov_mm.x > 0)) throw ArgumentError("fov_mm must be positive");
}

void validate(const CorruptionSpec& s) {
  if (!(s.fraction_corrupted_subjects >= 0.0 && s.fraction_corrupted_subjects <= 1.0)) {
    throw ArgumentError("fraction_corrupted_subjects outside [0, 1]");
  }
  if (!(s.surface_jitter_mm >= 0.0)) throw ArgumentError("surface_jitter_mm must be >= 0");
  if (!(s.slice_dropout_prob >= 0.0 && s.slice_dropout_prob <= 1.0)) {
    throw ArgumentError("slice_dropout_prob outside [0, 1]");
  }
}

SubjectRecord generate_subject(const PhantomSpec& spec) {
  validate(spec);
  const Vec3 spacing{spec.z_spacing_mm, spec.in_plane_spacing_mm, spec.in_plane_spacing_mm};
  const Shape3 shape{std::max<std::int64_t>(1, std::llround(spec.fov_mm.z / spacing.z)),
                     std::max<std::int64_t>(1, std::llround(spec.fov_mm.y / spacing.y)),
                     std::max<std::int64_t>(1, std::llround(spec.fov_mm.x / spacing.x))};
  Volume image(shape, spacing);
  LabelMap label(shape, spacing);

  const P3 joint{0.5 * (shape.x - 1) * spacing.x, 0.5 * (shape.y - 1) * spacing.y, 0.5 * (shape.z - 1) * spacing.z};
  const ShoulderModel model(spec, joint);

  Rng rng(derive_seed(spec.seed, {0x494du}));
  // Gain field: exp of a linear ramp along a random direction, scaled so the
  // log-gain reaches +-amplitude at the field-of-view boundary.
  const double phi = 2.0 * std::numbers::pi * rng.uniform();
  const double elev = (rng.uniform() - 0.5) * 0.5 * std::numbers::pi;
  const P3 gain_dir{std::cos(elev) * std::cos(phi), std::cos(elev) * std::sin(phi), std::sin(elev)};
  const P3 half_fov{0.5 * spec.fov_mm.x, 0.5 * spec.fov_mm.y, 0.5 * spec.fov_mm.z};
  auto gain = [&](P3 p) {
    if (spec.gain_log_amplitude == 0.0) return 1.0;
    const P3 r = p - joint;
    const double t = dot(gain_dir, P3{r.x / half_fov.x, r.y / half_fov.y, r.z / half_fov.z});
    return std::exp(spec.gain_log_amplitude * std::clamp(t, -1.0, 1.0));
  };
  const double body_ax = 0.47 * spec.fov_mm.x, body_ay = 0.43 * spec.fov_mm.y;
  auto intensity = [&](P3 p) {
    const std::uint8_t c = model.classify(p);
    if (c != kBackground) return spec.contrast.bone_mean;
    const double ex = (p.x - joint.x) / body_ax, ey = (p.y - joint.y) / body_ay;
    return ex * ex + ey * ey <= 1.0 ? spec.contrast.muscle_mean : 0.0;
  };

  // Coarse slices average k fine sub-slices spread across the slab.
  const int k = std::max(1, static_cast<int>(std::ceil(spec.z_spacing_mm / 1.0 - 1e-9)));
  const double noise = spec.contrast.noise_sigma;
  for (std::int64_t z = 0; z < shape.z; ++z) {
    for (std::int64_t y = 0; y < shape.y; ++y) {
      for (std::int64_t x = 0; x < shape.x; ++x) {
        const P3 center{x * spacing.x, y * spacing.y, z * spacing.z};
        label(z, y, x) = model.classify(center);
        double acc = 0.0;
        for (int s = 0; s < k; ++s) {
          const double dz = ((s + 0.5) / k - 0.5) * spacing.z;
          const P3 p{center.x, center.y, center.z + dz};
          double v = intensity(p) * gain(p);
          if (noise > 0.0) v += noise * rng.normal();
          acc += v;
        }
        image(z, y, x) = static_cast<float>(acc / k);
      }
    }
  }

  SubjectRecord rec;
  char id[32];
  std::snprintf(id, sizeof(id), "phantom_%016llx", static_cast<unsigned long long>(spec.seed));
  rec.subject_id = id;
  rec.image = std::move(image);
  rec.label = std::move(label);
  rec.source = SubjectSource::kSynthetic;
  rec.provenance = "synthetic";
  return rec;
}

LabelMap corrupt_labels(const LabelMap& labels, const CorruptionSpec& spec, std::uint64_t seed) {
  validate(spec);
  const Shape3 s = labels.shape();
  const std::size_t plane = static_cast<std::size_t>(s.y * s.x);
  Rng rng(seed);

  std::vector<double> radius[kNumClasses];
  std::vector<bool> dropped(static_cast<std::size_t>(s.z));
  for (std::int64_t z = 0; z < s.z; ++z) {
    for (int c = 1; c < kNumClasses; ++c) {
      radius[c].push_back(spec.surface_jitter_mm * (2.0 * rng.uniform() - 1.0));
    }
    dropped[z] = rng.uniform() < spec.slice_dropout_prob;
  }

  LabelMap out = labels;
  if (spec.surface_jitter_mm > 0.0) {
    const auto in = labels.data();
    std::vector<std::uint8_t> sites(in.size());
    for (int c = 1; c < kNumClasses; ++c) {
      for (std::size_t i = 0; i < in.size(); ++i) sites[i] = in[i] == c;
      const auto to_class = squared_distance_transform(sites, s, labels.spacing(), true);
      for (std::size_t i = 0; i < in.size(); ++i) sites[i] = in[i] != c;
      const auto to_other = squared_distance_transform(sites, s, labels.spacing(), true);
      for (std::int64_t z = 0; z < s.z; ++z) {
        const double r = radius[c][z];
        if (r == 0.0) continue;
        const double r2 = r * r;
        for (std::size_t i = z * plane; i < (z + 1) * plane; ++i) {
          if (r > 0.0) {
            if (in[i] == kBackground && out[i] == kBackground && to_class[i] <= r2) out[i] = static_cast<std::uint8_t>(c);
          } else if (in[i] == c && to_other[i] <= r2) {
            out[i] = kBackground;
          }
        }
      }
    }
  }
  for (std::int64_t z = 0; z < s.z; ++z) {
    if (!dropped[z]) continue;
    std::fill_n(out.data().begin() + static_cast<std::ptrdiff_t>(z * plane), plane, std::uint8_t{kBackground});
  }
  return out;
}

PhantomSpec sample_phantom_spec(std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x5350u}));
  PhantomSpec spec;
  spec.seed = seed;
  spec.z_spacing_mm = rng.uniform(1.0, 4.5);
  spec.in_plane_spacing_mm = rng.uniform(0.3125, 0.9615);
  spec.contrast.bone_mean = rng.uniform(0.7, 0.9);
  spec.contrast.muscle_mean = rng.uniform(0.3, 0.5);
  spec.contrast.noise_sigma = rng.uniform(0.02, 0.06);
  spec.gain_log_amplitude = rng.uniform(0.05, 0.25);
  return spec;
}

std::vector<SubjectRecord> generate_corpus(int n, std::uint64_t base_seed, const CorruptionSpec& corruption) {
  if (n < 5) throw ArgumentError("corpus needs at least 5 subjects to form 5 folds, got " + std::to_string(n));
  validate(corruption);

  const auto n_corrupt = static_cast<std::size_t>(std::llround(corruption.fraction_corrupted_subjects * n));
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng pick(derive_seed(base_seed, {0x434fu}));
  pick.shuffle(order);
  std::vector<bool> flagged(static_cast<std::size_t>(n), false);
  for (std::size_t i = 0; i < n_corrupt; ++i) flagged[order[i]] = true;

  std::vector<SubjectRecord> corpus;
  corpus.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(i);
    SubjectRecord rec = generate_subject(sample_phantom_spec(seed));
    char id[32];
    std::snprintf(id, sizeof(id), "subj_%03d", i);
    rec.subject_id = id;
    rec.fold = i % 5;
    rec.clean_label = rec.label;
    if (flagged[i]) {
      rec.label = corrupt_labels(rec.label, corruption, derive_seed(seed, {0x4a49u}));
      rec.corrupted = true;
    }
    corpus.push_back(std::move(rec));
  }
  return corpus;
}

}  // namespace recseg
