#include "recseg/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "recseg/errors.hpp"
#include "recseg/volume_io.hpp"

namespace recseg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename I>
I parse_integer(const std::string& text, const std::string& key) {
  I v{};
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size()) {
    throw FormatError(key, "expected an integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& text, const std::string& key) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw FormatError(key, "expected true or false, got '" + text + "'");
}

const char* bool_text(bool b) { return b ? "true" : "false"; }

std::vector<int> parse_int_list(const std::string& text, const std::string& key) {
  std::vector<int> out;
  std::stringstream ss(text);
  for (std::string tok; std::getline(ss, tok, ',');) out.push_back(parse_integer<int>(trim(tok), key));
  if (out.empty()) throw FormatError(key, "expected a comma-separated list");
  return out;
}

}  // namespace

Vec3 parse_spacing_xyz(const std::string& text) {
  std::vector<double> v;
  std::string tok;
  for (char c : text + "x") {
    if (c == 'x' || c == 'X') {
      v.push_back(parse_double(tok, "spacing"));
      tok.clear();
    } else {
      tok += c;
    }
  }
  if (v.size() != 3) throw FormatError("spacing", "expected XxYxZ in mm, got '" + text + "'");
  return Vec3{v[2], v[1], v[0]};
}

std::string format_spacing_xyz(const Vec3& v) {
  return format_double(v.x) + "x" + format_double(v.y) + "x" + format_double(v.z);
}

std::string format_shape_xyz(const Shape3& s) {
  return std::to_string(s.x) + "x" + std::to_string(s.y) + "x" + std::to_string(s.z);
}

void ExperimentConfig::set(const std::string& key, const std::string& raw) {
  try {
    assign(key, trim(raw));
  } catch (const FormatError& e) {
    if (e.field() == key) throw;
    const std::string what = e.what();
    throw FormatError(key, what.substr(std::min(what.size(), e.field().size() + 2)));
  }
}

void ExperimentConfig::assign(const std::string& key, const std::string& value) {
  auto& net = plan.network;
  if (key == "corpus.n") corpus_n = parse_integer<int>(value, key);
  else if (key == "corpus.seed") corpus_seed = parse_integer<std::uint64_t>(value, key);
  else if (key == "corpus.corrupt_frac") corruption.fraction_corrupted_subjects = parse_double(value, key);
  else if (key == "corpus.jitter_mm") corruption.surface_jitter_mm = parse_double(value, key);
  else if (key == "corpus.slice_drop") corruption.slice_dropout_prob = parse_double(value, key);
  else if (key == "preprocess.spacing_mm") preprocess.target_spacing = parse_spacing_xyz(value);
  else if (key == "preprocess.shape") preprocess.target_shape = parse_shape_xyz(value);
  else if (key == "preprocess.bias_sigma_mm") preprocess.bias_sigma_mm = parse_double(value, key);
  else if (key == "preprocess.bias_correction") preprocess.bias_correction = parse_bool(value, key);
  else if (key == "net.base_filters") net.base_filters = parse_integer<int>(value, key);
  else if (key == "net.dropout") net.dropout_rate = parse_double(value, key);
  else if (key == "net.dtype") net.parameter_dtype = net::parse_dtype(value);
  else if (key == "plan.rounds") plan.num_rounds = parse_integer<int>(value, key);
  else if (key == "plan.epochs") plan.epochs_per_round = parse_integer<int>(value, key);
  else if (key == "plan.merged_entry") plan.merged_entry = parse_bool(value, key);
  else if (key == "plan.redistort_per_epoch") plan.redistort_per_epoch = parse_bool(value, key);
  else if (key == "deform.control_spacing_mm") plan.deform.control_spacing_mm = parse_spacing_xyz(value);
  else if (key == "deform.max_disp_mm") plan.deform.max_disp_mm = parse_double(value, key);
  else if (key == "eval.against_clean") plan.evaluate_against_clean = parse_bool(value, key);
  else if (key == "eval.postprocess") plan.postprocess = parse_bool(value, key);
  else if (key == "seed") seed = parse_integer<std::uint64_t>(value, key);
  else if (key == "folds") folds = parse_integer<int>(value, key);
  else if (key == "out") out = value;
  else if (key == "size_study.sizes") size_study_sizes = parse_int_list(value, key);
  else throw FormatError(key, "unknown configuration key");
}

void ExperimentConfig::validate() const {
  if (corpus_n < 1) throw ArgumentError("config: corpus.n must be >= 1");
  recseg::validate(corruption);
  if (folds < 2) throw ArgumentError("config: folds must be >= 2");
  for (int n : size_study_sizes) {
    if (n < 2) throw ArgumentError("config: size_study.sizes entries must be >= 2");
  }
  plan.validate();
  net::check_input_shape(preprocess.target_shape);
}

std::string ExperimentConfig::dump() const {
  std::ostringstream os;
  const auto& net = plan.network;
  std::string sizes;
  for (std::size_t i = 0; i < size_study_sizes.size(); ++i) {
    sizes += (i ? "," : "") + std::to_string(size_study_sizes[i]);
  }
  os << "corpus.n = " << corpus_n << '\n'
     << "corpus.seed = " << corpus_seed << '\n'
     << "corpus.corrupt_frac = " << format_double(corruption.fraction_corrupted_subjects) << '\n'
     << "corpus.jitter_mm = " << format_double(corruption.surface_jitter_mm) << '\n'
     << "corpus.slice_drop = " << format_double(corruption.slice_dropout_prob) << '\n'
     << "preprocess.spacing_mm = " << format_spacing_xyz(preprocess.target_spacing) << '\n'
     << "preprocess.shape = " << format_shape_xyz(preprocess.target_shape) << '\n'
     << "preprocess.bias_sigma_mm = " << format_double(preprocess.bias_sigma_mm) << '\n'
     << "preprocess.bias_correction = " << bool_text(preprocess.bias_correction) << '\n'
     << "net.base_filters = " << net.base_filters << '\n'
     << "net.dropout = " << format_double(net.dropout_rate) << '\n'
     << "net.dtype = " << net::to_string(net.parameter_dtype) << '\n'
     << "plan.rounds = " << plan.num_rounds << '\n'
     << "plan.epochs = " << plan.epochs_per_round << '\n'
     << "plan.merged_entry = " << bool_text(plan.merged_entry) << '\n'
     << "plan.redistort_per_epoch = " << bool_text(plan.redistort_per_epoch) << '\n'
     << "deform.control_spacing_mm = " << format_spacing_xyz(plan.deform.control_spacing_mm) << '\n'
     << "deform.max_disp_mm = " << format_double(plan.deform.max_disp_mm) << '\n'
     << "eval.against_clean = " << bool_text(plan.evaluate_against_clean) << '\n'
     << "eval.postprocess = " << bool_text(plan.postprocess) << '\n'
     << "seed = " << seed << '\n'
     << "folds = " << folds << '\n'
     << "out = " << out.string() << '\n'
     << "size_study.sizes = " << sizes << '\n';
  return os.str();
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig c;
  std::istringstream in(text);
  std::set<std::string> seen;
  int lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError("line " + std::to_string(lineno), "expected key = value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (!seen.insert(key).second) throw FormatError(key, "duplicate configuration key");
    c.set(key, line.substr(eq + 1));
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("config", "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void ExperimentConfig::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("config", "cannot write " + path.string());
  out << dump();
}

}  // namespace recseg
