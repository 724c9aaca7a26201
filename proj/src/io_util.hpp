#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace dbmt::detail {

template <class T>
T to_little_endian(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&value, bytes, sizeof(T));
  }
  return value;
}

template <class T>
void write_le(std::ostream& out, T value) {
  value = to_little_endian(value);
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_le(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  return to_little_endian(value);
}

inline void write_f64_le(std::ostream& out, double v) { write_le(out, v); }
inline double read_f64_le(std::istream& in) { return read_le<double>(in); }

/// Shortest representation that round-trips.
std::string format_double(double v);

/// Parses a numeric CSV; a first line with non-numeric tokens is treated as a header.
std::vector<std::vector<double>> read_csv_numbers(const std::filesystem::path& path,
                                                  std::vector<std::string>* header = nullptr);

}  // namespace dbmt::detail
