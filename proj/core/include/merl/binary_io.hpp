#pragma once

// Little-endian primitives for checkpoint files.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace merl::io {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

inline std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xFFu) << (8 * (7 - i));
    return r;
  }
  return v;
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  const std::uint64_t le = to_le(v);
  os.write(reinterpret_cast<const char*>(&le), sizeof le);
}

inline std::uint64_t read_u64(std::istream& is) {
  std::uint64_t le = 0;
  is.read(reinterpret_cast<char*>(&le), sizeof le);
  if (!is) throw std::runtime_error("unexpected end of binary stream");
  return to_le(le);
}

inline void write_f64(std::ostream& os, double v) { write_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline double read_f64(std::istream& is) { return std::bit_cast<double>(read_u64(is)); }

inline void write_string(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
  const auto n = read_u64(is);
  if (n > (1ULL << 32)) throw std::runtime_error("binary stream: string length out of range");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("unexpected end of binary stream");
  return s;
}

/// Length header (u64) followed by the raw little-endian doubles.
inline void write_f64_array(std::ostream& os, std::span<const double> values) {
  write_u64(os, values.size());
  for (double v : values) write_f64(os, v);
}

inline std::vector<double> read_f64_array(std::istream& is) {
  const auto n = read_u64(is);
  if (n > (1ULL << 34)) throw std::runtime_error("binary stream: array length out of range");
  std::vector<double> out(n);
  for (auto& v : out) v = read_f64(is);
  return out;
}

inline void expect_tag(std::istream& is, const std::string& tag) {
  if (read_string(is) != tag) throw std::runtime_error("binary stream: expected section '" + tag + "'");
}

}  // namespace merl::io
