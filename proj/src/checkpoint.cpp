#include "mafn/checkpoint.hpp"

#include "binary_io.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace mafn {

namespace {

constexpr char kMagic[8] = {'M', 'A', 'F', 'N', 'C', 'K', 'P', 'T'};

using io::read_le;
using io::read_str;
using io::write_le;
using io::write_str;

}  // namespace

void ParamFile::put(const std::string& name, const Tensor& t) {
  Array a;
  a.shape = t.shape();
  a.data.assign(t.values().data(), t.values().data() + t.values().size());
  arrays[name] = std::move(a);
}

Tensor ParamFile::tensor(const std::string& name) const {
  auto it = arrays.find(name);
  if (it == arrays.end()) throw DataError("checkpoint: missing array '" + name + "'");
  if (it->second.shape.empty()) return Tensor::scalar(it->second.data.at(0));
  return Tensor::from(it->second.shape, it->second.data);
}

const std::string& ParamFile::string(const std::string& key) const {
  auto it = strings.find(key);
  if (it == strings.end()) throw DataError("checkpoint: missing entry '" + key + "'");
  return it->second;
}

void ParamFile::write(std::ostream& os) const {
  os.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(os, kVersion);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& [name, a] : arrays) {
    write_str(os, name);
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) write_le<std::uint64_t>(os, d);
    for (double v : a.data) write_le<double>(os, v);
  }
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(strings.size()));
  for (const auto& [k, v] : strings) {
    write_str(os, k);
    write_str(os, v);
  }
}

ParamFile ParamFile::read(std::istream& is) {
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("checkpoint: bad magic header");
  }
  const auto version = read_le<std::uint32_t>(is);
  if (version != kVersion) {
    throw DataError("checkpoint: unsupported format version " + std::to_string(version));
  }
  ParamFile f;
  const auto n_arrays = read_le<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n_arrays; ++i) {
    std::string name = read_str(is);
    Array a;
    const auto rank = read_le<std::uint32_t>(is);
    if (rank > 8) throw DataError("checkpoint: implausible rank for '" + name + "'");
    for (std::uint32_t d = 0; d < rank; ++d) a.shape.push_back(read_le<std::uint64_t>(is));
    const auto n = shape_numel(a.shape);
    if (n > (std::size_t{1} << 32)) throw DataError("checkpoint: implausible size for '" + name + "'");
    a.data.resize(n);
    for (auto& v : a.data) v = read_le<double>(is);
    f.arrays.emplace(std::move(name), std::move(a));
  }
  const auto n_strings = read_le<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n_strings; ++i) {
    std::string k = read_str(is);
    f.strings.emplace(std::move(k), read_str(is));
  }
  return f;
}

void ParamFile::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  write(os);
  if (!os) throw DataError("write failed: " + path.string());
}

ParamFile ParamFile::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  return read(is);
}

}  // namespace mafn
