#ifndef MAFN_SRC_BINARY_IO_HPP
#define MAFN_SRC_BINARY_IO_HPP

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "mafn/errors.hpp"

namespace mafn::io {

template <typename T>
void write_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) throw DataError("truncated binary file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

inline void write_str(std::ostream& os, const std::string& s) {
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_str(std::istream& is) {
  const auto n = read_le<std::uint32_t>(is);
  if (n > (1u << 28)) throw DataError("implausible string length in binary file");
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) throw DataError("truncated binary file");
  return s;
}

}  // namespace mafn::io

#endif  // MAFN_SRC_BINARY_IO_HPP
