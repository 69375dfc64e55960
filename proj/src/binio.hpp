#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

// Little-endian primitives for the FROST* file formats.

namespace frost::binio {

template <typename T>
void write_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i)
    buf[i] = static_cast<unsigned char>(
        (static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!in) throw std::runtime_error("binary read: truncated stream");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return static_cast<T>(v);
}

inline void write_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_le<std::uint32_t>(out, bits);
}

inline float read_f32(std::istream& in) {
  const std::uint32_t bits = read_le<std::uint32_t>(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_le<std::uint64_t>(out, bits);
}

inline double read_f64(std::istream& in) {
  const std::uint64_t bits = read_le<std::uint64_t>(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, std::size_t max_len = 4096) {
  const auto len = read_le<std::uint32_t>(in);
  if (len > max_len) throw std::runtime_error("binary read: string too long");
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("binary read: truncated string");
  return s;
}

inline void write_f32_array(std::ostream& out, const float* data,
                            std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) write_f32(out, data[i]);
}

inline void read_f32_array(std::istream& in, float* data, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) data[i] = read_f32(in);
}

}  // namespace frost::binio
