#include "recseg/grid.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

namespace recseg {

std::string to_string(const Shape3& s) {
  std::ostringstream os;
  os << s.x << 'x' << s.y << 'x' << s.z;
  return os.str();
}

std::string to_string(const Vec3& v) {
  std::ostringstream os;
  os << '(' << v.z << ", " << v.y << ", " << v.x << ')';
  return os.str();
}

Shape3 parse_shape_xyz(const std::string& text) {
  std::int64_t dims[3] = {0, 0, 0};
  const char* p = text.data();
  const char* end = text.data() + text.size();
  for (int i = 0; i < 3; ++i) {
    auto [next, ec] = std::from_chars(p, end, dims[i]);
    if (ec != std::errc{} || dims[i] < 1) {
      throw FormatError("shape", "expected XxYxZ with positive integers, got '" + text + "'");
    }
    p = next;
    if (i < 2) {
      if (p == end || (*p != 'x' && *p != 'X')) {
        throw FormatError("shape", "expected XxYxZ, got '" + text + "'");
      }
      ++p;
    }
  }
  if (p != end) throw FormatError("shape", "trailing characters in '" + text + "'");
  return Shape3{dims[2], dims[1], dims[0]};
}

void validate_labels(const LabelMap& labels) {
  const auto data = labels.data();
  auto bad = std::find_if(data.begin(), data.end(), [](std::uint8_t v) { return v >= kNumClasses; });
  if (bad != data.end()) {
    throw IntegrityError("label value " + std::to_string(int(*bad)) + " outside {0,1,2} at voxel " +
                         std::to_string(bad - data.begin()));
  }
}

void validate_subject(const SubjectRecord& s) {
  if (s.fold < 0 || s.fold > 4) {
    throw IntegrityError(s.subject_id + ": fold " + std::to_string(s.fold) + " outside [0, 4]");
  }
  if (!s.image.same_geometry(s.label)) {
    throw IntegrityError(s.subject_id + ": image and label geometry differ");
  }
  if (s.clean_label && !s.image.same_geometry(*s.clean_label)) {
    throw IntegrityError(s.subject_id + ": image and clean label geometry differ");
  }
  validate_labels(s.label);
}

}  // namespace recseg
