#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>
#include <random>

#include "doctest.h"
#include "pcrd/projection.hpp"

using namespace pcrd;

namespace {
constexpr double kDeg = std::numbers::pi / 180.0;

ProjectionConfig small_sensor() {
  ProjectionConfig c;
  c.rows = 64;
  c.cols = 8;
  c.fov_up = 10 * kDeg;
  c.fov_down = 20 * kDeg;
  return c;
}
}  // namespace

TEST_CASE("column of forward and backward rays") {
  CHECK(column_of(1, 0, 8) == 4);
  CHECK(column_of(-1, -1e-9, 8) == 7);
  CHECK(column_of(-1, 1e-9, 8) == 0);
  CHECK(column_of(0, 1, 8) == 2);
  CHECK(column_of(0, -1, 8) == 6);
}

TEST_CASE("row at the edges of the field of view") {
  const auto c = small_sensor();
  CHECK(row_of(std::cos(10 * kDeg), 0, std::sin(10 * kDeg), c) == 0);
  CHECK(row_of(std::cos(20 * kDeg), 0, -std::sin(20 * kDeg), c) == 63);
  CHECK(row_of(std::cos(40 * kDeg), 0, std::sin(40 * kDeg), c) == 0);
  CHECK(row_of(std::cos(60 * kDeg), 0, -std::sin(60 * kDeg), c) == 63);
  CHECK(row_of(1, 0, 0, c) == 21);
}

TEST_CASE("cell centres invert the projection") {
  const ProjectionConfig c;
  for (int r = 0; r < c.rows; r += 7) {
    for (int col = 0; col < c.cols; col += 97) {
      const double az = column_azimuth(col, c.cols);
      const double el = row_elevation(r, c);
      const double x = std::cos(el) * std::cos(az), y = std::cos(el) * std::sin(az), z = std::sin(el);
      CHECK(row_of(x, y, z, c) == r);
      CHECK(column_of(x, y, c.cols) == col);
    }
  }
}

TEST_CASE("projected channels") {
  const auto c = small_sensor();
  const PointList pts{Point(3, 4, 1)};
  const auto cloud = project_cloud(pts, c);
  CHECK(cloud.valid_count() == 1);
  int found = 0;
  for (int r = 0; r < cloud.rows(); ++r) {
    for (int col = 0; col < cloud.cols(); ++col) {
      if (!cloud.valid(r, col)) {
        CHECK(cloud.x(r, col) == 0.0f);
        CHECK(cloud.source(r, col) == -1);
        continue;
      }
      ++found;
      CHECK(cloud.range_xy(r, col) == doctest::Approx(5.0));
      CHECK(cloud.z(r, col) == doctest::Approx(1.0));
      CHECK(cloud.source(r, col) == 0);
      CHECK(r == row_of(3, 4, 1, c));
      CHECK(col == column_of(3, 4, c.cols));
    }
  }
  CHECK(found == 1);
}

TEST_CASE("nearest point wins a shared cell") {
  const auto c = small_sensor();
  const PointList pts{Point(10, 0, 0), Point(2, 0, 0), Point(5, 0, 0)};
  const auto cloud = project_cloud(pts, c);
  CHECK(cloud.valid_count() == 1);
  const int r = row_of(1, 0, 0, c), col = column_of(1, 0, c.cols);
  CHECK(cloud.x(r, col) == doctest::Approx(2.0));
  CHECK(cloud.source(r, col) == 1);
}

TEST_CASE("invalid points") {
  const auto c = small_sensor();
  const float nan = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(project_cloud(PointList{Point(0, 0, 0)}, c), Error);
  CHECK_THROWS_AS(project_cloud(PointList{Point(nan, 0, 0)}, c), Error);
  std::vector<std::size_t> kept;
  const auto clean = sanitize_points(PointList{Point(1, 0, 0), Point(0, 0, 0), Point(nan, 1, 1), Point(0, 2, 0)}, &kept);
  CHECK(clean.size() == 2);
  CHECK(kept == std::vector<std::size_t>{0, 3});
  CHECK(project_cloud(PointList{}, c).valid_count() == 0);
}

TEST_CASE("config validation") {
  ProjectionConfig c;
  c.rows = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = ProjectionConfig{};
  c.fov_up = -c.fov_down;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("projection properties on random scans") {
  const ProjectionConfig c;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<float> u(-50, 50);
  PointList pts(5000);
  for (auto& p : pts) p = Point(u(rng), u(rng), u(rng) * 0.1f);
  const auto cloud = project_cloud(pts, c);
  CHECK(cloud.valid_count() <= pts.size());
  std::vector<int> hits(pts.size(), 0);
  for (int r = 0; r < c.rows; ++r) {
    for (int col = 0; col < c.cols; ++col) {
      if (!cloud.valid(r, col)) continue;
      const int s = cloud.source(r, col);
      REQUIRE(s >= 0);
      ++hits[static_cast<std::size_t>(s)];
      const Point& p = pts[static_cast<std::size_t>(s)];
      CHECK(cloud.x(r, col) == p.x());
      CHECK(cloud.range_xy(r, col) == doctest::Approx(std::hypot(p.x(), p.y())).epsilon(1e-6));
    }
  }
  for (int h : hits) CHECK(h <= 1);

  // Every point either owns its cell or lost to a nearer one.
  for (std::size_t i = 0; i < pts.size(); i += 13) {
    const auto& p = pts[i];
    const int r = row_of(p.x(), p.y(), p.z(), c), col = column_of(p.x(), p.y(), c.cols);
    REQUIRE(cloud.valid(r, col));
    CHECK(cloud.point(r, col).norm() <= p.cast<double>().norm() + 1e-6);
  }
}

TEST_CASE("kitti bin round trip") {
  const auto path = (std::filesystem::temp_directory_path() / "pcrd_test_scan.bin").string();
  const PointList pts{Point(1.5f, -2.25f, 0.125f), Point(-30, 7, -1.73f)};
  write_kitti_bin(path, pts);
  CHECK(std::filesystem::file_size(path) == 32);
  const auto back = read_kitti_bin(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0] == pts[0]);
  CHECK(back[1] == pts[1]);
  std::filesystem::resize_file(path, 30);
  CHECK_THROWS_AS(read_kitti_bin(path), Error);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_kitti_bin(path), Error);
}
