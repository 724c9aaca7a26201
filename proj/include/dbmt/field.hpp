#pragma once

#include <filesystem>
#include <vector>

#include "dbmt/covariance.hpp"

namespace dbmt {

/// Image-shaped data: height × width × channels values, row-major, channel-last.
struct Field {
  GridShape shape;
  std::vector<double> values;

  Field() = default;
  explicit Field(GridShape s) : shape(s), values(static_cast<std::size_t>(s.size()), 0.0) {}
  Field(GridShape s, const Vector& v);

  double& at(Eigen::Index i, Eigen::Index j, Eigen::Index c) {
    return values[static_cast<std::size_t>((i * shape.width + j) * shape.channels + c)];
  }
  double at(Eigen::Index i, Eigen::Index j, Eigen::Index c) const {
    return values[static_cast<std::size_t>((i * shape.width + j) * shape.channels + c)];
  }
  Vector as_vector() const;
};

/// Flat binary: height·width·channels little-endian float64 values, no header.
Field read_field_binary(const std::filesystem::path& path, GridShape shape);
void write_field_binary(const std::filesystem::path& path, const Field& field);

/// CSV: one line per image row holding width·channels values (channel-last).
Field read_field_csv(const std::filesystem::path& path, Eigen::Index channels);
void write_field_csv(const std::filesystem::path& path, const Field& field);

}  // namespace dbmt
