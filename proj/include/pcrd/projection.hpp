#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pcrd/common.hpp"

namespace pcrd {

using Point = Eigen::Vector3f;
using PointList = std::vector<Point>;

/// Range-image geometry. Defaults describe a 64-beam HDL-64E.
struct ProjectionConfig {
  int rows = 64;        // beams
  int cols = 2048;      // azimuth bins
  double fov_up = 3.0 * 3.14159265358979323846 / 180.0;     // radians above horizontal
  double fov_down = 25.0 * 3.14159265358979323846 / 180.0;  // radians below horizontal

  double fov() const noexcept { return fov_up + fov_down; }
  void validate() const;
};

/// Organized H x W projection of one scan. Invalid cells hold zeros.
struct OrganizedCloud {
  Grid<float> x, y, z;
  Grid<float> range_xy;  // sqrt(x^2 + y^2), the distance to the sensor z-axis
  Mask valid;
  Grid<std::int32_t> source;  // index of the stored input point, -1 when invalid

  int rows() const noexcept { return valid.rows(); }
  int cols() const noexcept { return valid.cols(); }
  std::size_t valid_count() const;
  Vec3 point(int r, int c) const { return Vec3(x(r, c), y(r, c), z(r, c)); }
};

/// Column for a point: floor(0.5 * (1 - atan2(y, x) / pi) * cols), clamped.
int column_of(double x, double y, int cols);
/// Row for a point: floor((fov_up - asin(z / |p|)) / fov * rows), clamped.
int row_of(double x, double y, double z, const ProjectionConfig& cfg);

/// Direction of the ray through the center of cell (r, c); inverse of row_of/column_of.
double column_azimuth(double c, int cols);
double row_elevation(double r, const ProjectionConfig& cfg);

/// Projects an unordered scan. The nearest point wins when several share a cell.
/// Throws kInvalidInput for zero-norm or non-finite points.
OrganizedCloud project_cloud(std::span<const Point> points, const ProjectionConfig& cfg);

/// Drops zero-norm and non-finite points; returns the kept indices in `kept` if non-null.
PointList sanitize_points(std::span<const Point> points, std::vector<std::size_t>* kept = nullptr);

/// KITTI velodyne .bin: little-endian float32 quadruples (x, y, z, intensity).
PointList read_kitti_bin(const std::string& path);
void write_kitti_bin(const std::string& path, std::span<const Point> points);

}  // namespace pcrd
