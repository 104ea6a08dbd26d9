#pragma once

#include "recseg/grid.hpp"

namespace recseg {

enum class Interp { kTrilinear, kNearest };

/// Output extent per axis is max(1, round(n * spacing / target)). Output
/// voxel i samples the input at continuous index i * target / spacing, so the
/// physical origin is preserved. Samples beyond the input are clamped to the
/// edge.
Volume resample(const Volume& v, Vec3 target_spacing, Interp mode = Interp::kTrilinear);
/// Labels are always resampled nearest-neighbor.
LabelMap resample(const LabelMap& l, Vec3 target_spacing);

/// Center crop and/or zero pad to `target`. Odd surpluses put the extra voxel
/// at the high end. The origin is shifted so retained voxels keep their
/// physical coordinates.
Volume crop_or_pad(const Volume& v, Shape3 target);
LabelMap crop_or_pad(const LabelMap& l, Shape3 target);

/// Homomorphic bias-field surrogate. The multiplicative field is estimated
/// as exp of the Gaussian-smoothed log intensity over the tissue mask
/// (normalized convolution), divided out, and the result rescaled to the
/// input's mean. The estimate is applied twice, the second pass working on
/// the residual of the first. Constant volumes are returned unchanged.
Volume correct_bias(const Volume& v, double smoothing_sigma_mm = 25.0);

/// Min-max map to [0, 1]; constant volumes map to all zeros.
Volume normalize_intensity(const Volume& v);

struct PreprocessConfig {
  Vec3 target_spacing{1.0, 1.0, 1.0};
  Shape3 target_shape{80, 144, 144};
  double bias_sigma_mm = 25.0;
  bool bias_correction = true;
};

/// resample -> crop/pad -> bias correction -> normalization for the image;
/// resample (nearest) -> crop/pad for the label and clean label.
SubjectRecord preprocess_subject(const SubjectRecord& s, const PreprocessConfig& cfg);

}  // namespace recseg
