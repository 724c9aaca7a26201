#include "dbmt/field.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dbmt/error.hpp"
#include "io_util.hpp"

namespace dbmt {

Field::Field(GridShape s, const Vector& v) : shape(s), values(v.data(), v.data() + v.size()) {
  if (v.size() != s.size()) throw ConfigError("field: vector length does not match shape");
}

Vector Field::as_vector() const {
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Field read_field_binary(const std::filesystem::path& path, GridShape shape) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open field file " + path.string());
  Field field(shape);
  for (double& v : field.values) v = detail::read_f64_le(in);
  if (!in) throw ConfigError("field file " + path.string() + " is shorter than its shape");
  if (in.peek() != std::char_traits<char>::eof())
    throw ConfigError("field file " + path.string() + " is longer than its shape");
  return field;
}

void write_field_binary(const std::filesystem::path& path, const Field& field) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write field file " + path.string());
  for (double v : field.values) detail::write_f64_le(out, v);
}

Field read_field_csv(const std::filesystem::path& path, Eigen::Index channels) {
  const auto rows = detail::read_csv_numbers(path);
  if (rows.empty()) throw ConfigError("field CSV " + path.string() + " is empty");
  const auto row_len = static_cast<Eigen::Index>(rows.front().size());
  if (channels < 1 || row_len % channels != 0)
    throw ConfigError("field CSV row length is not a multiple of the channel count");
  GridShape shape{static_cast<Eigen::Index>(rows.size()), row_len / channels, channels};
  Field field(shape);
  std::size_t k = 0;
  for (const auto& row : rows) {
    if (static_cast<Eigen::Index>(row.size()) != row_len)
      throw ConfigError("field CSV rows have inconsistent lengths");
    for (double v : row) field.values[k++] = v;
  }
  return field;
}

void write_field_csv(const std::filesystem::path& path, const Field& field) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write field file " + path.string());
  const Eigen::Index row_len = field.shape.width * field.shape.channels;
  for (Eigen::Index i = 0; i < field.shape.height; ++i) {
    for (Eigen::Index k = 0; k < row_len; ++k) {
      if (k) out << ',';
      out << detail::format_double(field.values[static_cast<std::size_t>(i * row_len + k)]);
    }
    out << '\n';
  }
}

}  // namespace dbmt
