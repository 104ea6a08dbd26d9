#include "recseg/net/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "recseg/errors.hpp"
#include "recseg/volume_io.hpp"

namespace recseg::net {
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "checkpoint payloads are stored little-endian");

namespace {

constexpr const char* kMagic = "RECSEG-CHECKPOINT 1";

struct Header {
  CheckpointInfo info;
  Dtype dtype = Dtype::kF32;
  struct Entry {
    std::string name;
    std::vector<std::int64_t> dims;
    std::size_t count = 0;
  };
  std::vector<Entry> entries;
  std::streampos payload_start;
};

int parse_int(const std::string& s, const std::string& field) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return static_cast<int>(v);
  } catch (const std::logic_error&) {
    throw FormatError(field, "expected an integer, got '" + s + "'");
  }
}

Header read_header(std::ifstream& in, const fs::path& path) {
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw FormatError("magic", path.string() + " is not a checkpoint");
  Header h;
  bool ended = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "end") {
      ended = true;
      break;
    }
    std::string a;
    if (key == "tensor") {
      Header::Entry e;
      ls >> e.name;
      std::size_t count = 1;
      while (ls >> a) {
        const int d = parse_int(a, "tensor");
        if (d < 1) throw FormatError("tensor", "nonpositive dimension in " + e.name);
        e.dims.push_back(d);
        count *= static_cast<std::size_t>(d);
      }
      if (e.name.empty() || e.dims.empty()) throw FormatError("tensor", "malformed line '" + line + "'");
      e.count = count;
      h.entries.push_back(std::move(e));
      continue;
    }
    ls >> a;
    if (key == "dtype") h.dtype = parse_dtype(a);
    else if (key == "base_filters") h.info.config.base_filters = parse_int(a, key);
    else if (key == "depth") h.info.config.depth = parse_int(a, key);
    else if (key == "in_channels") h.info.config.in_channels = parse_int(a, key);
    else if (key == "num_classes") h.info.config.num_classes = parse_int(a, key);
    else if (key == "dropout_rate") h.info.config.dropout_rate = parse_double(a, key);
    else if (key == "epoch") h.info.epoch = parse_int(a, key);
    else if (key == "round") h.info.round = parse_int(a, key);
    else throw FormatError(key, "unknown checkpoint field");
  }
  if (!ended) throw FormatError("end", "checkpoint header is not terminated");
  h.info.config.parameter_dtype = h.dtype;
  h.payload_start = in.tellg();
  return h;
}

}  // namespace

template <typename T>
void write_checkpoint(const NetworkParameters<T>& params, int epoch, int round, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IntegrityError("cannot write checkpoint " + tmp.string());
    const auto& c = params.config;
    out << kMagic << '\n'
        << "dtype " << (std::is_same_v<T, double> ? "f64" : "f32") << '\n'
        << "in_channels " << c.in_channels << '\n'
        << "num_classes " << c.num_classes << '\n'
        << "base_filters " << c.base_filters << '\n'
        << "depth " << c.depth << '\n'
        << "dropout_rate " << format_double(c.dropout_rate) << '\n'
        << "epoch " << epoch << '\n'
        << "round " << round << '\n';
    for (const auto& t : params.tensors) {
      out << "tensor " << t.name;
      for (auto d : t.dims) out << ' ' << d;
      out << '\n';
    }
    out << "end\n";
    for (const auto& t : params.tensors) {
      out.write(reinterpret_cast<const char*>(t.values.data()),
                static_cast<std::streamsize>(t.values.size() * sizeof(T)));
    }
    if (!out) throw IntegrityError("checkpoint write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

CheckpointInfo read_checkpoint_info(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open checkpoint " + path.string());
  return read_header(in, path).info;
}

template <typename T>
NetworkParameters<T> read_checkpoint(const fs::path& path, CheckpointInfo* info) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open checkpoint " + path.string());
  const Header h = read_header(in, path);
  const Dtype want = std::is_same_v<T, double> ? Dtype::kF64 : Dtype::kF32;
  if (h.dtype != want) {
    throw FormatError("dtype", std::string("checkpoint stores ") + to_string(h.dtype) + ", requested " + to_string(want));
  }
  // The layout is a pure function of the config; compare against a fresh build.
  NetworkParameters<T> p = build<T>(h.info.config, 0);
  if (p.tensors.size() != h.entries.size()) {
    throw IntegrityError("checkpoint lists " + std::to_string(h.entries.size()) + " tensors, config implies " +
                         std::to_string(p.tensors.size()));
  }
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    auto& t = p.tensors[i];
    if (t.name != h.entries[i].name || t.dims != h.entries[i].dims) {
      throw IntegrityError("checkpoint tensor '" + h.entries[i].name + "' does not match expected '" + t.name + "'");
    }
    in.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(t.values.size() * sizeof(T)));
    if (!in) throw IntegrityError("checkpoint payload truncated at tensor '" + t.name + "'");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IntegrityError("checkpoint has trailing bytes");
  if (info) *info = h.info;
  return p;
}

template void write_checkpoint(const NetworkParameters<float>&, int, int, const fs::path&);
template void write_checkpoint(const NetworkParameters<double>&, int, int, const fs::path&);
template NetworkParameters<float> read_checkpoint(const fs::path&, CheckpointInfo*);
template NetworkParameters<double> read_checkpoint(const fs::path&, CheckpointInfo*);

}  // namespace recseg::net
