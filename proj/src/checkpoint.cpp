#include "speechllm/checkpoint.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "speechllm/error.h"

namespace speechllm {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint32_t read_u32(std::istream& in, const fs::path& path) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("truncated tensor file " + path.string());
  return v;
}

template <typename T>
std::vector<real> read_values(std::istream& in, std::size_t count, const fs::path& path) {
  std::vector<T> raw(count);
  if (count && !in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count * sizeof(T)))) {
    throw IoError("truncated tensor file " + path.string());
  }
  return std::vector<real>(raw.begin(), raw.end());
}

}  // namespace

void write_tensor_file(const fs::path& path, const Tensor& tensor) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_u32(out, static_cast<std::uint32_t>(tensor.rank()));
  for (int d : tensor.shape()) write_u32(out, static_cast<std::uint32_t>(d));
  auto v = tensor.values();
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(real)));
  if (!out) throw IoError("failed writing " + path.string());
}

Tensor read_tensor_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open tensor file " + path.string());
  const auto file_size = fs::file_size(path);
  const std::uint32_t rank = read_u32(in, path);
  if (rank > 8) throw IoError("implausible tensor rank in " + path.string());
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<int>(read_u32(in, path)));
  const std::size_t count = shape_numel(shape);
  const std::size_t header = 4 * (1 + static_cast<std::size_t>(rank));
  const std::size_t payload = file_size - header;
  std::vector<real> values;
  if (payload == count * sizeof(float)) {
    values = read_values<float>(in, count, path);
  } else if (payload == count * sizeof(double)) {
    values = read_values<double>(in, count, path);
  } else {
    throw IoError("tensor file " + path.string() + " has " + std::to_string(payload) + " payload bytes for " +
                  std::to_string(count) + " values");
  }
  return Tensor(std::move(shape), std::move(values));
}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void save_checkpoint(const fs::path& dir, const ParameterStore& store, const CheckpointMeta& meta) {
  fs::create_directories(dir);
  std::ofstream out(dir / "meta.txt", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "meta.txt").string());
  out << "format speechllm-checkpoint 1\n";
  out << "dtype " << kRealName << "\n";
  out << "step " << meta.step << "\n";
  out << "config_hash " << (meta.config_hash.empty() ? "-" : meta.config_hash) << "\n";
  for (const auto& [key, value] : meta.extra) out << "extra " << key << ' ' << value << "\n";
  for (const Parameter& p : store.parameters()) {
    out << "param " << p.name << ' ' << group_name(p.group) << "\n";
    write_tensor_file(dir / (p.name + ".bin"), p.tensor);
  }
  if (!out) throw IoError("failed writing " + (dir / "meta.txt").string());
}

Checkpoint read_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "meta.txt");
  if (!in) throw IoError("missing checkpoint metadata " + (dir / "meta.txt").string());
  Checkpoint ck;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format" || key == "dtype") continue;
    if (key == "step") {
      ls >> ck.meta.step;
    } else if (key == "config_hash") {
      ls >> ck.meta.config_hash;
      if (ck.meta.config_hash == "-") ck.meta.config_hash.clear();
    } else if (key == "extra") {
      std::string k;
      ls >> k;
      std::string rest;
      std::getline(ls, rest);
      if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
      ck.meta.extra[k] = rest;
    } else if (key == "param") {
      std::string name, group;
      ls >> name >> group;
      ck.groups[name] = parse_group(group);
      ck.tensors.emplace(name, read_tensor_file(dir / (name + ".bin")));
    } else {
      throw ParseError("checkpoint meta.txt line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  return ck;
}

CheckpointMeta load_checkpoint(const fs::path& dir, ParameterStore& store) {
  Checkpoint ck = read_checkpoint(dir);
  store.load_state(ck.tensors);
  return ck.meta;
}

}  // namespace speechllm
