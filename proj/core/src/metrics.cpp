#include "recseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

#include "recseg/distance_transform.hpp"
#include "recseg/volume_io.hpp"

namespace recseg {

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

BinaryMask class_mask(const LabelMap& l, std::uint8_t c) {
  BinaryMask m(l.shape(), l.spacing());
  const auto d = l.data();
  for (std::size_t i = 0; i < d.size(); ++i) m.bits[i] = d[i] == c;
  return m;
}

BinaryMask foreground_mask(const LabelMap& l) {
  BinaryMask m(l.shape(), l.spacing());
  const auto d = l.data();
  for (std::size_t i = 0; i < d.size(); ++i) m.bits[i] = d[i] != kBackground;
  return m;
}

namespace {

void require_same_shape(const BinaryMask& a, const BinaryMask& b) {
  if (!(a.shape == b.shape)) {
    throw ArgumentError("mask shapes differ: " + to_string(a.shape) + " vs " + to_string(b.shape));
  }
}

void require_nonempty(const BinaryMask& a, const BinaryMask& b, const char* metric) {
  const bool ea = a.empty(), eb = b.empty();
  if (ea || eb) {
    using Op = UndefinedMetricError::Operand;
    const Op which = ea && eb ? Op::kBoth : ea ? Op::kFirst : Op::kSecond;
    const char* name = ea && eb ? "both operands" : ea ? "first operand" : "second operand";
    throw UndefinedMetricError(which, std::string(metric) + " undefined: " + name + " empty");
  }
}

// Nearest-boundary distances from every boundary voxel of `from` to the
// boundary of `to`, in raster order of `from`.
std::vector<double> directed_distances(const BinaryMask& from_boundary, const BinaryMask& to_boundary) {
  const auto d2 = squared_distance_transform(to_boundary.bits, to_boundary.shape, to_boundary.spacing);
  std::vector<double> out;
  for (std::size_t i = 0; i < from_boundary.bits.size(); ++i) {
    if (from_boundary.bits[i]) out.push_back(std::sqrt(d2[i]));
  }
  return out;
}

}  // namespace

double dice(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a, b);
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    na += a.bits[i];
    nb += b.bits[i];
    both += a.bits[i] & b.bits[i];
  }
  if (na + nb == 0) return 1.0;
  return static_cast<double>(both) / (static_cast<double>(na + nb) / 2.0);
}

BinaryMask boundary_mask(const BinaryMask& m) {
  const Shape3 s = m.shape;
  BinaryMask out(s, m.spacing);
  for (std::int64_t z = 0; z < s.z; ++z) {
    for (std::int64_t y = 0; y < s.y; ++y) {
      for (std::int64_t x = 0; x < s.x; ++x) {
        if (!m.at(z, y, x)) continue;
        const bool edge = z == 0 || y == 0 || x == 0 || z == s.z - 1 || y == s.y - 1 || x == s.x - 1;
        out.at(z, y, x) = edge || !m.at(z - 1, y, x) || !m.at(z + 1, y, x) || !m.at(z, y - 1, x) ||
                          !m.at(z, y + 1, x) || !m.at(z, y, x - 1) || !m.at(z, y, x + 1);
      }
    }
  }
  return out;
}

std::vector<Point3> boundary_voxels(const BinaryMask& m) {
  const BinaryMask b = boundary_mask(m);
  std::vector<Point3> pts;
  for (std::int64_t z = 0; z < m.shape.z; ++z) {
    for (std::int64_t y = 0; y < m.shape.y; ++y) {
      for (std::int64_t x = 0; x < m.shape.x; ++x) {
        if (b.at(z, y, x)) pts.push_back({z * m.spacing.z, y * m.spacing.y, x * m.spacing.x});
      }
    }
  }
  return pts;
}

double asd(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a, b);
  require_nonempty(a, b, "ASD");
  const BinaryMask ba = boundary_mask(a), bb = boundary_mask(b);
  const auto ab = directed_distances(ba, bb);
  const auto ba_d = directed_distances(bb, ba);
  double sum = 0.0;
  for (double d : ab) sum += d;
  for (double d : ba_d) sum += d;
  return sum / static_cast<double>(ab.size() + ba_d.size());
}

double hausdorff(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a, b);
  require_nonempty(a, b, "HD");
  const BinaryMask ba = boundary_mask(a), bb = boundary_mask(b);
  double hd = 0.0;
  for (double d : directed_distances(ba, bb)) hd = std::max(hd, d);
  for (double d : directed_distances(bb, ba)) hd = std::max(hd, d);
  return hd;
}

LabelMap largest_component(const LabelMap& l) {
  const Shape3 s = l.shape();
  LabelMap out = l;
  const auto in = l.data();
  std::vector<std::int32_t> comp(in.size());
  for (int c = 1; c < kNumClasses; ++c) {
    std::fill(comp.begin(), comp.end(), -1);
    std::vector<std::size_t> sizes;
    std::deque<std::int64_t> queue;
    for (std::size_t seed = 0; seed < in.size(); ++seed) {
      if (in[seed] != c || comp[seed] >= 0) continue;
      const auto id = static_cast<std::int32_t>(sizes.size());
      std::size_t size = 0;
      comp[seed] = id;
      queue.push_back(static_cast<std::int64_t>(seed));
      while (!queue.empty()) {
        const std::int64_t v = queue.front();
        queue.pop_front();
        ++size;
        const std::int64_t z = v / (s.y * s.x), y = (v / s.x) % s.y, x = v % s.x;
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          for (std::int64_t dy = -1; dy <= 1; ++dy) {
            for (std::int64_t dx = -1; dx <= 1; ++dx) {
              const std::int64_t nz = z + dz, ny = y + dy, nx = x + dx;
              if (nz < 0 || ny < 0 || nx < 0 || nz >= s.z || ny >= s.y || nx >= s.x) continue;
              const std::size_t n = l.index(nz, ny, nx);
              if (in[n] == c && comp[n] < 0) {
                comp[n] = id;
                queue.push_back(static_cast<std::int64_t>(n));
              }
            }
          }
        }
      }
      sizes.push_back(size);
    }
    if (sizes.size() <= 1) continue;
    const auto keep = static_cast<std::int32_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (in[i] == c && comp[i] != keep) out[i] = kBackground;
    }
  }
  return out;
}

const char* to_string(MetricClass c) {
  switch (c) {
    case MetricClass::kHumerus: return "humerus";
    case MetricClass::kScapula: return "scapula";
    case MetricClass::kBoth: return "both";
  }
  return "?";
}

MetricClass parse_metric_class(const std::string& s) {
  for (auto c : kMetricClasses) {
    if (s == to_string(c)) return c;
  }
  throw FormatError("class", "unknown metric class '" + s + "'");
}

const MetricTriple& Evaluation::operator[](MetricClass c) const {
  return c == MetricClass::kHumerus ? humerus : c == MetricClass::kScapula ? scapula : both;
}

MetricTriple evaluate_masks(const BinaryMask& pred, const BinaryMask& truth) {
  MetricTriple t;
  t.dsc = dice(pred, truth);
  if (!pred.empty() && !truth.empty()) {
    t.hd_mm = hausdorff(pred, truth);
    t.asd_mm = asd(pred, truth);
  }
  return t;
}

Evaluation evaluate(const LabelMap& pred, const LabelMap& truth, bool postprocess) {
  if (!(pred.shape() == truth.shape()) || !(pred.spacing() == truth.spacing())) {
    throw ArgumentError("prediction and truth geometry differ: " + to_string(pred.shape()) + " vs " +
                        to_string(truth.shape()));
  }
  const LabelMap p = postprocess ? largest_component(pred) : pred;
  Evaluation e;
  e.humerus = evaluate_masks(class_mask(p, kHumerus), class_mask(truth, kHumerus));
  e.scapula = evaluate_masks(class_mask(p, kScapula), class_mask(truth, kScapula));
  e.both = evaluate_masks(foreground_mask(p), foreground_mask(truth));
  return e;
}

void MetricsReport::add(const std::string& group, const std::string& subject, int round, const Evaluation& e) {
  for (auto c : kMetricClasses) rows.push_back(MetricsRow{group, subject, round, c, e[c]});
}

void MetricsReport::append(const MetricsReport& other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
}

std::vector<std::string> MetricsReport::groups() const {
  std::vector<std::string> out;
  for (const auto& r : rows) {
    if (std::find(out.begin(), out.end(), r.group) == out.end()) out.push_back(r.group);
  }
  return out;
}

std::vector<int> MetricsReport::rounds() const {
  std::set<int> s;
  for (const auto& r : rows) s.insert(r.round);
  return {s.begin(), s.end()};
}

MetricsReport MetricsReport::filter_group(const std::string& group) const {
  MetricsReport out;
  for (const auto& r : rows) {
    if (r.group == group) out.rows.push_back(r);
  }
  return out;
}

MetricTriple mean_metrics(const MetricsReport& r, int round, MetricClass c) {
  double dsc = 0.0, hd = 0.0, asd_sum = 0.0;
  std::size_t n = 0, n_def = 0;
  for (const auto& row : r.rows) {
    if (row.round != round || row.cls != c) continue;
    dsc += row.m.dsc;
    ++n;
    if (row.m.defined()) {
      hd += *row.m.hd_mm;
      asd_sum += *row.m.asd_mm;
      ++n_def;
    }
  }
  MetricTriple t;
  t.dsc = n ? dsc / static_cast<double>(n) : std::nan("");
  if (n_def) {
    t.hd_mm = hd / static_cast<double>(n_def);
    t.asd_mm = asd_sum / static_cast<double>(n_def);
  }
  return t;
}

std::string metrics_csv(const MetricsReport& r) {
  std::ostringstream os;
  os << "group,subject,round,class,dsc,hd_mm,asd_mm,defined\n";
  for (const auto& row : r.rows) {
    os << row.group << ',' << row.subject << ',' << row.round << ',' << to_string(row.cls) << ','
       << format_double(row.m.dsc) << ',' << (row.m.hd_mm ? format_double(*row.m.hd_mm) : "nan") << ','
       << (row.m.asd_mm ? format_double(*row.m.asd_mm) : "nan") << ',' << (row.m.defined() ? 1 : 0) << '\n';
  }
  return os.str();
}

void write_metrics_csv(const MetricsReport& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("metrics", "cannot write " + path.string());
  out << metrics_csv(r);
}

MetricsReport read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("metrics", "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "group,subject,round,class,dsc,hd_mm,asd_mm,defined") {
    throw FormatError("metrics", "unexpected header in " + path.string());
  }
  MetricsReport r;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string tok; std::getline(ss, tok, ',');) f.push_back(tok);
    if (f.size() != 8) throw FormatError("metrics", "expected 8 fields in '" + line + "'");
    MetricsRow row;
    row.group = f[0];
    row.subject = f[1];
    row.round = std::stoi(f[2]);
    row.cls = parse_metric_class(f[3]);
    row.m.dsc = parse_double(f[4], "dsc");
    if (f[7] == "1") {
      row.m.hd_mm = parse_double(f[5], "hd_mm");
      row.m.asd_mm = parse_double(f[6], "asd_mm");
    }
    r.rows.push_back(std::move(row));
  }
  return r;
}

namespace {

std::string fixed2(std::optional<double> v) {
  if (!v || std::isnan(*v)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", *v);
  return buf;
}

void markdown_block(std::ostringstream& os, const std::string& title, const MetricsReport& r) {
  os << "| " << title << " | Humerus DSC | Humerus HD | Humerus ASD | Scapula DSC | Scapula HD | Scapula ASD "
     << "| Both DSC | Both HD | Both ASD |\n";
  os << "|---|---|---|---|---|---|---|---|---|---|\n";
  for (int round : r.rounds()) {
    os << "| R" << round;
    for (auto c : kMetricClasses) {
      const auto m = mean_metrics(r, round, c);
      os << " | " << fixed2(m.dsc) << " | " << fixed2(m.hd_mm) << " | " << fixed2(m.asd_mm);
    }
    os << " |\n";
  }
  os << '\n';
}

}  // namespace

std::string metrics_markdown(const MetricsReport& r, const std::string& group_prefix) {
  std::ostringstream os;
  for (const auto& g : r.groups()) markdown_block(os, group_prefix + g, r.filter_group(g));
  if (r.groups().size() > 1) {
    // Cross-group means weight every group equally.
    MetricsReport means;
    for (const auto& g : r.groups()) {
      const auto sub = r.filter_group(g);
      for (int round : sub.rounds()) {
        for (auto c : kMetricClasses) means.rows.push_back(MetricsRow{"mean", g, round, c, mean_metrics(sub, round, c)});
      }
    }
    markdown_block(os, "Mean", means);
  }
  return os.str();
}

}  // namespace recseg
