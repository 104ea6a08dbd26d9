#pragma once

#include <cstdint>
#include <vector>

#include "recseg/grid.hpp"

namespace recseg {

struct PhantomContrast {
  double bone_mean = 0.8;
  double muscle_mean = 0.4;
  double noise_sigma = 0.04;
};

/// Parameters of one synthetic shoulder phantom.
struct PhantomSpec {
  std::uint64_t seed = 0;
  double z_spacing_mm = 3.0;         // [1.0, 4.5]
  double in_plane_spacing_mm = 0.8;  // [0.3125, 0.9615]
  PhantomContrast contrast;
  double shape_jitter = 1.0;  // scales the random perturbation of the bone primitives
  /// Peak log-amplitude of the smooth multiplicative gain field; 0 disables it.
  double gain_log_amplitude = 0.15;
  /// Field of view (z, y, x) in mm, centered on the joint.
  Vec3 fov_mm{56.0, 96.0, 96.0};
};

/// Throws ArgumentError if a field is outside its documented range.
void validate(const PhantomSpec& spec);

/// Label corruption model applied slice by slice, mimicking 2D annotation.
struct CorruptionSpec {
  double fraction_corrupted_subjects = 0.0;  // [0, 1]
  double surface_jitter_mm = 0.0;            // >= 0
  double slice_dropout_prob = 0.0;           // [0, 1]
};

void validate(const CorruptionSpec& spec);

/// Renders a phantom: a humerus (capsule shaft with a spherical head, class 1)
/// and a scapula (thin curved plate carrying a glenoid with a concave cup
/// facing the head, class 2), separated by a 2-8 mm joint gap. The image is
/// the per-class mean intensity times a smooth gain field plus Gaussian
/// noise, slab-averaged over ceil(z_spacing / 1 mm) fine slices per stored
/// slice. Deterministic in the spec.
SubjectRecord generate_subject(const PhantomSpec& spec);

/// Per-slice boundary roughening (each foreground class dilated or eroded by
/// a uniform draw in [-jitter, +jitter] mm) followed by whole-slice erasure of
/// foreground with probability `slice_dropout_prob`. Dilation only claims
/// background voxels; erosion only releases voxels to background.
LabelMap corrupt_labels(const LabelMap& labels, const CorruptionSpec& spec, std::uint64_t seed);

/// Draws per-subject acquisition parameters from the clinical ranges.
PhantomSpec sample_phantom_spec(std::uint64_t seed);

/// n subjects with folds assigned round-robin over 5 folds. Exactly
/// round(fraction * n) subjects, chosen by seed, carry corrupted labels;
/// every subject keeps its clean label in `clean_label`.
std::vector<SubjectRecord> generate_corpus(int n, std::uint64_t base_seed, const CorruptionSpec& corruption);

}  // namespace recseg
