#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "recseg/grid.hpp"

namespace recseg {

// Two-file volume format: a text header `name.vol` and a raw little-endian
// payload `name.raw` in z-major (z slowest, x fastest) order.
//
//   RECSEG-VOLUME 1
//   dims 8 8 4            (x y z)
//   spacing 1 1 4.5       (x y z, mm)
//   origin 0 0 0          (x y z, mm)
//   dtype f32             (f32 | u8)
//   kind image            (image | label)
//   classes 3             (labels only)
//   payload name.raw      (relative to the header's directory)

void write_volume(const Volume& v, const std::filesystem::path& header_path);
void write_labels(const LabelMap& l, const std::filesystem::path& header_path);

/// Reads an image. u8 payloads are widened to float.
Volume read_volume(const std::filesystem::path& header_path);
/// Reads a label map; requires kind=label, dtype=u8 and values in {0,1,2}.
LabelMap read_labels(const std::filesystem::path& header_path);

struct ManifestEntry {
  std::string subject_id;
  std::filesystem::path image;
  std::filesystem::path label;
  int fold = 0;
  bool corrupted = false;
  std::filesystem::path clean_label;  // empty when absent
};

/// CSV columns: subject_id,image,label,fold[,corrupted,clean_label]. Relative
/// paths are resolved against the manifest's directory on read.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& csv_path);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& csv_path);

/// Writes every subject under `dir` as `<id>_image.vol`, `<id>_label.vol`
/// (plus `<id>_clean.vol` when a clean label exists) and a manifest.csv.
void write_subjects(const std::vector<SubjectRecord>& subjects, const std::filesystem::path& dir);
std::vector<SubjectRecord> read_subjects(const std::filesystem::path& manifest_csv);

/// Shortest round-trip decimal text for a double.
std::string format_double(double v);
double parse_double(const std::string& text, const std::string& field);

}  // namespace recseg
