#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "linkdist/error.hpp"

namespace linkdist {

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + p.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + p.string());
}

template <typename T>
T byteswap_value(T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  for (size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
  std::memcpy(&v, b, sizeof(T));
  return v;
}

// Reads exactly `count` little-endian values; any other file length is a
// format error.
template <typename T>
std::vector<T> read_le_array(const std::filesystem::path& p, size_t count) {
  std::error_code ec;
  const auto bytes = std::filesystem::file_size(p, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot stat " + p.string());
  if (bytes != count * sizeof(T))
    throw Error(ErrorCode::kFormat, p.filename().string() + ": expected " + std::to_string(count * sizeof(T)) +
                                        " bytes from meta.json, found " + std::to_string(bytes));
  std::vector<T> out(count);
  std::ifstream in(p, std::ios::binary);
  if (!in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(bytes)))
    throw Error(ErrorCode::kIo, "read failed: " + p.string());
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    for (auto& v : out) v = byteswap_value(v);
  }
  return out;
}

template <typename T>
void write_le_array(const std::filesystem::path& p, std::span<const T> values) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + p.string());
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    for (T v : values) {
      const T s = byteswap_value(v);
      out.write(reinterpret_cast<const char*>(&s), sizeof(T));
    }
  } else {
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + p.string());
}

template <typename T>
void write_le_array(const std::filesystem::path& p, const std::vector<T>& values) {
  write_le_array<T>(p, std::span<const T>(values));
}

}  // namespace linkdist
