#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "btm/common.hpp"

// Little-endian primitives shared by the binary file formats (model files,
// partition-function caches, feature matrices).

namespace btm::wire {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(buf, 4);
}

inline void write_f64(std::ostream& os, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  os.write(buf, 8);
}

/// Reads exactly n bytes or throws DataError naming the shortfall.
inline void read_exact(std::istream& is, char* out, std::size_t n, const std::string& what) {
  is.read(out, static_cast<std::streamsize>(n));
  std::size_t got = static_cast<std::size_t>(is.gcount());
  if (got != n) {
    throw DataError(what + " truncated: missing " + std::to_string(n - got) + " bytes");
  }
}

inline std::uint32_t read_u32(std::istream& is, const std::string& what) {
  char buf[4];
  read_exact(is, buf, 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
  return v;
}

inline double read_f64(std::istream& is, const std::string& what) {
  char buf[8];
  read_exact(is, buf, 8, what);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

inline void expect_magic(std::istream& is, const char (&magic)[9], const std::string& what) {
  char buf[8];
  read_exact(is, buf, 8, what);
  for (int i = 0; i < 8; ++i) {
    if (buf[i] != magic[i]) throw DataError(what + ": bad magic, not a " + std::string(magic, 8) + " file");
  }
}

/// Throws if the stream still holds unread bytes.
inline void expect_eof(std::istream& is, const std::string& what) {
  char c;
  if (is.read(&c, 1)) {
    std::streampos here = is.tellg();
    is.seekg(0, std::ios::end);
    std::streamoff extra = is.tellg() - here + 1;
    throw DataError(what + ": " + std::to_string(extra) + " unexpected trailing bytes");
  }
}

}  // namespace btm::wire
