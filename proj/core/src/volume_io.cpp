#include "recseg/volume_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace recseg {
namespace fs = std::filesystem;

namespace {

constexpr const char* kMagic = "RECSEG-VOLUME 1";

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

struct Header {
  Shape3 shape;
  Vec3 spacing;
  Vec3 origin;
  std::string dtype;
  std::string kind;
  int classes = 0;
  fs::path payload;
};

Header parse_header(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("header", "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMagic) {
    throw FormatError("magic", "expected '" + std::string(kMagic) + "' in " + path.string());
  }
  std::map<std::string, std::vector<std::string>> fields;
  while (std::getline(in, line)) {
    auto tok = split_ws(line);
    if (tok.empty() || tok[0][0] == '#') continue;
    const std::string key = tok[0];
    tok.erase(tok.begin());
    if (fields.count(key)) throw FormatError(key, "duplicate field");
    fields[key] = std::move(tok);
  }
  auto require = [&](const std::string& key, std::size_t n) -> const std::vector<std::string>& {
    auto it = fields.find(key);
    if (it == fields.end()) throw FormatError(key, "missing field");
    if (it->second.size() != n) {
      throw FormatError(key, "expected " + std::to_string(n) + " value(s), got " +
                                 std::to_string(it->second.size()));
    }
    return it->second;
  };
  auto triple = [&](const std::string& key) {
    const auto& v = require(key, 3);
    return Vec3{parse_double(v[2], key), parse_double(v[1], key), parse_double(v[0], key)};
  };

  Header h;
  const auto& dims = require("dims", 3);
  std::int64_t d[3];
  for (int i = 0; i < 3; ++i) {
    auto [p, ec] = std::from_chars(dims[i].data(), dims[i].data() + dims[i].size(), d[i]);
    if (ec != std::errc{} || p != dims[i].data() + dims[i].size() || d[i] < 1) {
      throw FormatError("dims", "expected positive integer, got '" + dims[i] + "'");
    }
  }
  h.shape = Shape3{d[2], d[1], d[0]};
  h.spacing = triple("spacing");
  if (!(h.spacing.x > 0 && h.spacing.y > 0 && h.spacing.z > 0)) {
    throw FormatError("spacing", "components must be strictly positive");
  }
  h.origin = triple("origin");
  h.dtype = require("dtype", 1)[0];
  if (h.dtype != "f32" && h.dtype != "u8") throw FormatError("dtype", "unsupported '" + h.dtype + "'");
  h.kind = require("kind", 1)[0];
  if (h.kind != "image" && h.kind != "label") throw FormatError("kind", "unsupported '" + h.kind + "'");
  if (h.kind == "label") {
    const auto& c = require("classes", 1)[0];
    auto [p, ec] = std::from_chars(c.data(), c.data() + c.size(), h.classes);
    if (ec != std::errc{} || h.classes != kNumClasses) {
      throw FormatError("classes", "expected " + std::to_string(kNumClasses) + ", got '" + c + "'");
    }
  }
  h.payload = path.parent_path() / require("payload", 1)[0];
  for (const auto& [key, _] : fields) {
    static const char* known[] = {"dims", "spacing", "origin", "dtype", "kind", "classes", "payload"};
    if (std::none_of(std::begin(known), std::end(known), [&](const char* k) { return key == k; })) {
      throw FormatError(key, "unknown field");
    }
  }
  return h;
}

void write_header(const fs::path& path, const Shape3& s, const Vec3& sp, const Vec3& o,
                  const char* dtype, const char* kind) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("header", "cannot write " + path.string());
  out << kMagic << '\n';
  out << "dims " << s.x << ' ' << s.y << ' ' << s.z << '\n';
  out << "spacing " << format_double(sp.x) << ' ' << format_double(sp.y) << ' ' << format_double(sp.z) << '\n';
  out << "origin " << format_double(o.x) << ' ' << format_double(o.y) << ' ' << format_double(o.z) << '\n';
  out << "dtype " << dtype << '\n';
  out << "kind " << kind << '\n';
  if (std::strcmp(kind, "label") == 0) out << "classes " << kNumClasses << '\n';
  out << "payload " << fs::path(path).replace_extension(".raw").filename().string() << '\n';
  if (!out) throw FormatError("header", "write failed for " + path.string());
}

template <typename T>
void write_payload(const fs::path& path, std::span<const T> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IntegrityError("cannot write payload " + path.string());
  if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size_bytes()));
  } else {
    for (T v : data) {
      auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
      std::reverse(bytes.begin(), bytes.end());
      out.write(bytes.data(), sizeof(T));
    }
  }
  if (!out) throw IntegrityError("payload write failed for " + path.string());
}

template <typename T>
std::vector<T> read_payload(const fs::path& path, std::size_t count) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IntegrityError("cannot open payload " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != count * sizeof(T)) {
    throw IntegrityError("payload " + path.string() + " holds " + std::to_string(bytes / sizeof(T)) +
                         " values (" + std::to_string(bytes) + " bytes), header dims require " +
                         std::to_string(count));
  }
  in.seekg(0);
  std::vector<T> data(count);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    for (auto& v : data) {
      auto b = std::bit_cast<std::array<char, sizeof(T)>>(v);
      std::reverse(b.begin(), b.end());
      v = std::bit_cast<T>(b);
    }
  }
  return data;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

double parse_double(const std::string& text, const std::string& field) {
  if (text == "nan") return std::nan("");
  double v = 0.0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size()) {
    throw FormatError(field, "expected a real number, got '" + text + "'");
  }
  return v;
}

void write_volume(const Volume& v, const fs::path& header_path) {
  write_header(header_path, v.shape(), v.spacing(), v.origin(), "f32", "image");
  write_payload<float>(fs::path(header_path).replace_extension(".raw"), v.data());
}

void write_labels(const LabelMap& l, const fs::path& header_path) {
  validate_labels(l);
  write_header(header_path, l.shape(), l.spacing(), l.origin(), "u8", "label");
  write_payload<std::uint8_t>(fs::path(header_path).replace_extension(".raw"), l.data());
}

Volume read_volume(const fs::path& header_path) {
  const Header h = parse_header(header_path);
  Volume v(h.shape, h.spacing, h.origin);
  if (h.dtype == "f32") {
    v.storage() = read_payload<float>(h.payload, h.shape.voxels());
  } else {
    auto raw = read_payload<std::uint8_t>(h.payload, h.shape.voxels());
    std::copy(raw.begin(), raw.end(), v.storage().begin());
  }
  return v;
}

LabelMap read_labels(const fs::path& header_path) {
  const Header h = parse_header(header_path);
  if (h.kind != "label") throw FormatError("kind", "expected 'label' in " + header_path.string());
  if (h.dtype != "u8") throw FormatError("dtype", "labels must be u8 in " + header_path.string());
  LabelMap l(h.shape, h.spacing, h.origin);
  l.storage() = read_payload<std::uint8_t>(h.payload, h.shape.voxels());
  validate_labels(l);
  return l;
}

std::vector<ManifestEntry> read_manifest(const fs::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw FormatError("manifest", "cannot open " + csv_path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("manifest", "empty file " + csv_path.string());
  const auto cols = split_csv(line);
  auto col = [&](const std::string& name) -> int {
    auto it = std::find(cols.begin(), cols.end(), name);
    return it == cols.end() ? -1 : static_cast<int>(it - cols.begin());
  };
  const int c_id = col("subject_id"), c_img = col("image"), c_lab = col("label"), c_fold = col("fold");
  const int c_cor = col("corrupted"), c_clean = col("clean_label");
  for (auto [c, name] : {std::pair{c_id, "subject_id"}, {c_img, "image"}, {c_lab, "label"}, {c_fold, "fold"}}) {
    if (c < 0) throw FormatError(name, "missing manifest column");
  }
  const fs::path base = csv_path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

  std::vector<ManifestEntry> entries;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    if (f.size() != cols.size()) {
      throw FormatError("manifest", "line " + std::to_string(line_no) + " has " + std::to_string(f.size()) +
                                        " fields, expected " + std::to_string(cols.size()));
    }
    ManifestEntry e;
    e.subject_id = f[c_id];
    e.image = resolve(f[c_img]);
    e.label = resolve(f[c_lab]);
    try {
      e.fold = std::stoi(f[c_fold]);
    } catch (const std::exception&) {
      throw FormatError("fold", "line " + std::to_string(line_no) + ": not an integer");
    }
    if (c_cor >= 0) e.corrupted = f[c_cor] == "1" || f[c_cor] == "true";
    if (c_clean >= 0 && !f[c_clean].empty()) e.clean_label = resolve(f[c_clean]);
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const fs::path& csv_path) {
  std::ofstream out(csv_path, std::ios::trunc);
  if (!out) throw FormatError("manifest", "cannot write " + csv_path.string());
  const fs::path base = csv_path.parent_path();
  auto rel = [&](const fs::path& p) {
    return p.empty() ? std::string() : fs::path(p).lexically_relative(base).generic_string();
  };
  out << "subject_id,image,label,fold,corrupted,clean_label\n";
  for (const auto& e : entries) {
    out << e.subject_id << ',' << rel(e.image) << ',' << rel(e.label) << ',' << e.fold << ','
        << (e.corrupted ? 1 : 0) << ',' << rel(e.clean_label) << '\n';
  }
}

void write_subjects(const std::vector<SubjectRecord>& subjects, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<ManifestEntry> entries;
  for (const auto& s : subjects) {
    ManifestEntry e;
    e.subject_id = s.subject_id;
    e.image = dir / (s.subject_id + "_image.vol");
    e.label = dir / (s.subject_id + "_label.vol");
    e.fold = s.fold;
    e.corrupted = s.corrupted;
    write_volume(s.image, e.image);
    write_labels(s.label, e.label);
    if (s.clean_label) {
      e.clean_label = dir / (s.subject_id + "_clean.vol");
      write_labels(*s.clean_label, e.clean_label);
    }
    entries.push_back(std::move(e));
  }
  write_manifest(entries, dir / "manifest.csv");
}

std::vector<SubjectRecord> read_subjects(const fs::path& manifest_csv) {
  std::vector<SubjectRecord> out;
  for (const auto& e : read_manifest(manifest_csv)) {
    SubjectRecord s;
    s.subject_id = e.subject_id;
    s.image = read_volume(e.image);
    s.label = read_labels(e.label);
    s.fold = e.fold;
    s.source = SubjectSource::kExternal;
    s.corrupted = e.corrupted;
    if (!e.clean_label.empty()) s.clean_label = read_labels(e.clean_label);
    validate_subject(s);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace recseg
