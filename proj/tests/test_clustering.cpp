#include <cmath>
#include <numbers>

#include "doctest.h"
#include "pcrd/clustering.hpp"
#include "support.hpp"

using namespace pcrd;

namespace {
ProjectionConfig narrow(int rows, int cols) {
  ProjectionConfig p;
  p.rows = rows;
  p.cols = cols;
  return p;
}
}  // namespace

TEST_CASE("merge angle values") {
  CHECK(merge_angle(10, 10, 0.01) == doctest::Approx((std::numbers::pi - 0.01) / 2).epsilon(1e-9));
  CHECK(merge_angle(10, 1, 0.01) == doctest::Approx(0.00111).epsilon(0.01));
  CHECK_THROWS_AS(merge_angle(1, 2, 0.01), Error);
  CHECK_THROWS_AS(merge_angle(1, 0, 0.01), Error);
}

TEST_CASE("merge angle grows with the near/far ratio") {
  double prev = -1;
  for (double d2 = 0.5; d2 <= 10.0; d2 += 0.5) {
    const double a = merge_angle(10, d2, 0.003);
    CHECK(a > prev);
    prev = a;
  }
}

TEST_CASE("two separated blobs") {
  const auto proj = narrow(16, 64);
  Mask ground;
  OrganizedCloud cloud = pcrd::testing::random_depth_image(0, 16, 64, proj, &ground);
  cloud.valid = Mask(16, 64);
  ground = Mask(16, 64);
  auto put = [&](int r, int c, double d) {
    const double az = column_azimuth(c, 64), el = row_elevation(r, proj);
    cloud.x(r, c) = static_cast<float>(d * std::cos(el) * std::cos(az));
    cloud.y(r, c) = static_cast<float>(d * std::cos(el) * std::sin(az));
    cloud.z(r, c) = static_cast<float>(d * std::sin(el));
    cloud.valid(r, c) = 1;
  };
  for (int r = 4; r < 8; ++r)
    for (int c = 10; c < 14; ++c) {
      put(r, c, 5.0);
      put(r, c + 4, 30.0);  // adjacent columns, 25 m further away
    }
  ClusterConfig cfg;
  cfg.min_cluster_points = 1;
  const auto res = cluster_depth(cloud, ground, cfg, proj);
  CHECK(res.count == 2);
  CHECK(res.labels(5, 11) != res.labels(5, 15));
  CHECK(res.labels(0, 0) == 0);
}

TEST_CASE("single point and minimum size") {
  const auto proj = narrow(16, 64);
  Mask ground;
  OrganizedCloud cloud = pcrd::testing::random_depth_image(0, 16, 64, proj, &ground);
  cloud.valid = Mask(16, 64);
  ground = Mask(16, 64);
  cloud.x(3, 3) = 5;
  cloud.valid(3, 3) = 1;
  ClusterConfig cfg;
  cfg.min_cluster_points = 1;
  CHECK(cluster_depth(cloud, ground, cfg, proj).count == 1);
  cfg.min_cluster_points = 2;
  const auto res = cluster_depth(cloud, ground, cfg, proj);
  CHECK(res.count == 0);
  CHECK(res.labels(3, 3) == 0);
}

TEST_CASE("all ground gives no clusters") {
  const auto proj = narrow(16, 64);
  Mask ground;
  const auto cloud = pcrd::testing::random_depth_image(3, 16, 64, proj, &ground);
  ground = Mask(16, 64, 1);
  ClusterConfig cfg;
  cfg.min_cluster_points = 1;
  const auto res = cluster_depth(cloud, ground, cfg, proj);
  CHECK(res.count == 0);
  for (auto v : res.labels.data()) CHECK(v == 0);
}

TEST_CASE("labels are contiguous and respect the masks") {
  const auto proj = narrow(16, 64);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Mask ground;
    const auto cloud = pcrd::testing::random_depth_image(seed, 16, 64, proj, &ground);
    ClusterConfig cfg;
    cfg.min_cluster_points = 3;
    const auto res = cluster_depth(cloud, ground, cfg, proj);
    std::vector<int> sizes(static_cast<std::size_t>(res.count) + 1, 0);
    for (int r = 0; r < 16; ++r)
      for (int c = 0; c < 64; ++c) {
        const int l = res.labels(r, c);
        REQUIRE(l >= 0);
        REQUIRE(l <= res.count);
        if (!cloud.valid(r, c) || ground(r, c)) CHECK(l == 0);
        ++sizes[static_cast<std::size_t>(l)];
      }
    for (std::size_t k = 1; k < sizes.size(); ++k) CHECK(sizes[k] >= 3);
  }
}

TEST_CASE("matches union-find reference") {
  const auto proj = narrow(16, 64);
  for (std::uint64_t seed = 100; seed < 130; ++seed) {
    Mask ground;
    const auto cloud = pcrd::testing::random_depth_image(seed, 16, 64, proj, &ground);
    for (int min_points : {1, 4}) {
      ClusterConfig cfg;
      cfg.min_cluster_points = min_points;
      const auto res = cluster_depth(cloud, ground, cfg, proj);
      CHECK(pcrd::testing::same_partition(res.labels, pcrd::testing::union_find_labels(cloud, ground, cfg, proj)));
    }
  }
}

TEST_CASE("clustering wraps across the azimuth seam") {
  const auto proj = narrow(16, 64);
  Mask ground;
  OrganizedCloud cloud = pcrd::testing::random_depth_image(0, 16, 64, proj, &ground);
  cloud.valid = Mask(16, 64);
  ground = Mask(16, 64);
  for (int c : {62, 63, 0, 1}) {
    const double az = column_azimuth(c, 64);
    cloud.x(8, c) = static_cast<float>(6 * std::cos(az));
    cloud.y(8, c) = static_cast<float>(6 * std::sin(az));
    cloud.z(8, c) = 0;
    cloud.valid(8, c) = 1;
  }
  ClusterConfig cfg;
  cfg.min_cluster_points = 1;
  const auto res = cluster_depth(cloud, ground, cfg, proj);
  CHECK(res.count == 1);
}

TEST_CASE("invalid configuration") {
  ClusterConfig cfg;
  cfg.theta = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = ClusterConfig{};
  cfg.min_cluster_points = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  const auto proj = narrow(16, 64);
  Mask ground;
  const auto cloud = pcrd::testing::random_depth_image(0, 16, 64, proj, &ground);
  CHECK_THROWS_AS(cluster_depth(cloud, Mask(8, 8), ClusterConfig{}, proj), Error);
}
