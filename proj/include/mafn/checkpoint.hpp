#ifndef MAFN_CHECKPOINT_HPP
#define MAFN_CHECKPOINT_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "mafn/tensor.hpp"

namespace mafn {

/*
 * Portable parameter file.
 *
 * Layout (all integers little-endian):
 *   magic    "MAFNCKPT" (8 bytes)
 *   version  u32
 *   n_arrays u32, then per array (sorted by name):
 *     name_len u32, name bytes, rank u32, dims u64[rank], data f64[numel]
 *   n_strings u32, then per entry (sorted by key):
 *     key_len u32, key bytes, value_len u32, value bytes
 */
struct ParamFile {
  static constexpr std::uint32_t kVersion = 1;

  struct Array {
    Shape shape;
    std::vector<double> data;
  };

  std::map<std::string, Array> arrays;
  std::map<std::string, std::string> strings;

  void put(const std::string& name, const Tensor& t);
  Tensor tensor(const std::string& name) const;
  const std::string& string(const std::string& key) const;
  bool has_array(const std::string& name) const { return arrays.count(name) != 0; }

  void write(std::ostream& os) const;
  static ParamFile read(std::istream& is);
  void save(const std::filesystem::path& path) const;
  static ParamFile load(const std::filesystem::path& path);
};

}  // namespace mafn

#endif  // MAFN_CHECKPOINT_HPP
