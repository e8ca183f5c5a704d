#pragma once

// Little-endian primitives shared by the dataset and checkpoint containers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "lvsa/error.hpp"

namespace lvsa::binio {

template <class UInt>
void put_uint(std::ostream& out, UInt v) {
  char bytes[sizeof(UInt)];
  for (std::size_t i = 0; i < sizeof(UInt); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof bytes);
}

template <class UInt>
UInt get_uint(std::istream& in) {
  unsigned char bytes[sizeof(UInt)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof bytes)) {
    throw FormatError("unexpected end of file");
  }
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(bytes[i]) << (8 * i);
  return v;
}

inline void put_f32(std::ostream& out, float v) { put_uint(out, std::bit_cast<std::uint32_t>(v)); }
inline float get_f32(std::istream& in) { return std::bit_cast<float>(get_uint<std::uint32_t>(in)); }
inline void put_f64(std::ostream& out, double v) { put_uint(out, std::bit_cast<std::uint64_t>(v)); }
inline double get_f64(std::istream& in) { return std::bit_cast<double>(get_uint<std::uint64_t>(in)); }
inline void put_i32(std::ostream& out, std::int32_t v) { put_uint(out, static_cast<std::uint32_t>(v)); }
inline std::int32_t get_i32(std::istream& in) { return static_cast<std::int32_t>(get_uint<std::uint32_t>(in)); }

inline void put_string(std::ostream& out, const std::string& s) {
  put_uint(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in, std::size_t max_len = (1u << 24)) {
  const auto len = get_uint<std::uint32_t>(in);
  if (len > max_len) throw FormatError("string length out of range");
  std::string s(len, '\0');
  if (len > 0 && !in.read(s.data(), len)) throw FormatError("unexpected end of file");
  return s;
}

inline void expect_magic(std::istream& in, const std::string& magic, const char* what) {
  std::string got(magic.size(), '\0');
  if (!in.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic) {
    throw FormatError(std::string(what) + ": bad magic");
  }
}

}  // namespace lvsa::binio
