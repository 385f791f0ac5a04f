#include "pcrd/projection.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>

namespace pcrd {

void ProjectionConfig::validate() const {
  if (rows < 2) fail(ErrorCode::kConfig, "projection.rows must be >= 2");
  if (cols < 4) fail(ErrorCode::kConfig, "projection.cols must be >= 4");
  if (!(fov_up >= 0.0) || !(fov_down >= 0.0)) fail(ErrorCode::kConfig, "projection FOV bounds must be >= 0");
  if (!(fov() > 0.0)) fail(ErrorCode::kConfig, "projection total FOV must be > 0");
}

std::size_t OrganizedCloud::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.data().begin(), valid.data().end(), std::uint8_t{1}));
}

int column_of(double x, double y, int cols) {
  const double u = 0.5 * (1.0 - std::atan2(y, x) / std::numbers::pi) * cols;
  return std::clamp(static_cast<int>(std::floor(u)), 0, cols - 1);
}

int row_of(double x, double y, double z, const ProjectionConfig& cfg) {
  const double norm = std::sqrt(x * x + y * y + z * z);
  const double elevation = std::asin(std::clamp(z / norm, -1.0, 1.0));
  const double v = (cfg.fov_up - elevation) / cfg.fov() * cfg.rows;
  return std::clamp(static_cast<int>(std::floor(v)), 0, cfg.rows - 1);
}

double column_azimuth(double c, int cols) {
  return std::numbers::pi * (1.0 - 2.0 * (c + 0.5) / cols);
}

double row_elevation(double r, const ProjectionConfig& cfg) {
  return cfg.fov_up - (r + 0.5) / cfg.rows * cfg.fov();
}

OrganizedCloud project_cloud(std::span<const Point> points, const ProjectionConfig& cfg) {
  cfg.validate();
  const int h = cfg.rows;
  const int w = cfg.cols;
  OrganizedCloud out{Grid<float>(h, w), Grid<float>(h, w), Grid<float>(h, w),
                     Grid<float>(h, w), Mask(h, w), Grid<std::int32_t>(h, w, -1)};
  Grid<double> best(h, w, std::numeric_limits<double>::infinity());

  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point& p = points[i];
    if (!p.allFinite()) fail(ErrorCode::kInvalidInput, "non-finite coordinate at point " + std::to_string(i));
    const double x = p.x(), y = p.y(), z = p.z();
    const double n2 = x * x + y * y + z * z;
    if (!(n2 > 0.0)) fail(ErrorCode::kInvalidInput, "zero-norm point at index " + std::to_string(i));

    const int c = column_of(x, y, w);
    const int r = row_of(x, y, z, cfg);
    if (n2 >= best(r, c)) continue;
    best(r, c) = n2;
    out.x(r, c) = p.x();
    out.y(r, c) = p.y();
    out.z(r, c) = p.z();
    out.range_xy(r, c) = std::sqrt(p.x() * p.x() + p.y() * p.y());
    out.valid(r, c) = 1;
    out.source(r, c) = static_cast<std::int32_t>(i);
  }
  return out;
}

PointList sanitize_points(std::span<const Point> points, std::vector<std::size_t>* kept) {
  PointList out;
  out.reserve(points.size());
  if (kept) kept->clear();
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point& p = points[i];
    if (!p.allFinite() || !(p.squaredNorm() > 0.0f)) continue;
    out.push_back(p);
    if (kept) kept->push_back(i);
  }
  return out;
}

namespace {

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

float load_le_float(const unsigned char* b) {
  std::uint32_t u = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                    (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return std::bit_cast<float>(u);
}

void store_le_float(float f, unsigned char* b) {
  const auto u = std::bit_cast<std::uint32_t>(f);
  b[0] = static_cast<unsigned char>(u);
  b[1] = static_cast<unsigned char>(u >> 8);
  b[2] = static_cast<unsigned char>(u >> 16);
  b[3] = static_cast<unsigned char>(u >> 24);
}

}  // namespace

PointList read_kitti_bin(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 16 != 0) fail(ErrorCode::kIo, path + ": size is not a multiple of 16 bytes");
  PointList out(bytes.size() / 16);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const unsigned char* rec = bytes.data() + 16 * i;
    out[i] = Point(load_le_float(rec), load_le_float(rec + 4), load_le_float(rec + 8));
  }
  return out;
}

void write_kitti_bin(const std::string& path, std::span<const Point> points) {
  std::vector<unsigned char> bytes(points.size() * 16);
  for (std::size_t i = 0; i < points.size(); ++i) {
    unsigned char* rec = bytes.data() + 16 * i;
    store_le_float(points[i].x(), rec);
    store_le_float(points[i].y(), rec + 4);
    store_le_float(points[i].z(), rec + 8);
    store_le_float(0.0f, rec + 12);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace pcrd
