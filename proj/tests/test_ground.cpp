#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "pcrd/evaluation.hpp"
#include "pcrd/ground.hpp"
#include "pcrd/synth.hpp"

using namespace pcrd;

namespace {

struct Images {
  Grid<float> range, z;
  Mask valid;
};

Images patch(int h, int w) { return {Grid<float>(h, w), Grid<float>(h, w), Mask(h, w, 1)}; }

OrganizedCloud render(const Scene& scene, const ProjectionConfig& sensor, std::uint64_t seed,
                      std::vector<std::uint8_t>* gt = nullptr) {
  RenderOptions opt;
  const auto scan = render_scan(scene, sensor, opt, seed);
  if (gt) *gt = ground_labels(scan);
  return project_cloud(scan.points, sensor);
}

}  // namespace

TEST_CASE("derivative filters") {
  SUBCASE("constant height has no vertical slope") {
    auto im = patch(4, 8);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 8; ++c) {
        im.range(r, c) = 10.0f - 2.0f * r;
        im.z(r, c) = -1.7f;
      }
    const auto p = normal_proxies(im.range, im.z, im.valid);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 8; ++c) {
        REQUIRE(p.vertical_ok(r, c));
        CHECK(p.slope(r, c) == 0.0f);
      }
    for (int c = 0; c < 8; ++c) CHECK_FALSE(p.vertical_ok(3, c));
  }
  SUBCASE("constant range along a row has no horizontal response") {
    auto im = patch(3, 8);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 8; ++c) im.range(r, c) = 5.0f + r;
    const auto p = normal_proxies(im.range, im.z, im.valid);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 8; ++c) {
        REQUIRE(p.horizontal_ok(r, c));
        CHECK(p.horizontal(r, c) == 0.0f);
      }
  }
  SUBCASE("height equal to range gives unit slope") {
    auto im = patch(4, 4);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) im.range(r, c) = im.z(r, c) = 1.0f + 0.5f * r + 0.1f * c;
    const auto p = normal_proxies(im.range, im.z, im.valid);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) CHECK(p.slope(r, c) == doctest::Approx(1.0));
  }
  SUBCASE("horizontal taps wrap at the seam") {
    auto im = patch(1, 8);
    for (int c = 0; c < 8; ++c) im.range(0, c) = static_cast<float>(c);
    const auto p = normal_proxies(im.range, im.z, im.valid);
    // taps at c-1, c, c+1, c+2 with weights 1, 2, -2, -1
    CHECK(p.horizontal(0, 0) == doctest::Approx(7 + 0 - 2 * 1 - 2));
    CHECK(p.horizontal(0, 7) == doctest::Approx(6 + 2 * 7 - 0 - 1));
    CHECK(p.horizontal(0, 3) == doctest::Approx(2 + 6 - 8 - 5));
  }
  SUBCASE("an invalid tap disables the cell") {
    auto im = patch(3, 8);
    im.valid(1, 4) = 0;
    const auto p = normal_proxies(im.range, im.z, im.valid);
    for (int c : {2, 3, 4, 5}) CHECK_FALSE(p.horizontal_ok(1, c));
    CHECK(p.horizontal_ok(1, 6));
    CHECK(p.horizontal_ok(1, 0));
    CHECK_FALSE(p.vertical_ok(0, 4));
    CHECK_FALSE(p.vertical_ok(0, 3));
    CHECK_FALSE(p.vertical_ok(1, 4));
    CHECK_FALSE(p.vertical_ok(1, 3));
  }
}

TEST_CASE("ransac on exact plane") {
  std::vector<Vec3> pts;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) pts.emplace_back(i - 4.5, j * 0.7, 0.0);
  GroundConfig cfg;
  const auto plane = fit_plane_ransac(pts, cfg, 3);
  REQUIRE(plane);
  CHECK(plane->a1 == doctest::Approx(0).epsilon(1e-9));
  CHECK(plane->a2 == doctest::Approx(0).epsilon(1e-9));
  CHECK(plane->a3 == doctest::Approx(1));
  CHECK(plane->a4 == doctest::Approx(0).epsilon(1e-9));
  CHECK(plane->inlier_count == 100);
}

TEST_CASE("ransac with noise and outliers") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-10, 10);
  std::normal_distribution<double> noise(0, 0.01);
  std::vector<Vec3> pts;
  for (int i = 0; i < 80; ++i) {
    const double x = u(rng), y = u(rng);
    pts.emplace_back(x, y, 0.1 * x + noise(rng));
  }
  for (int i = 0; i < 20; ++i) pts.emplace_back(u(rng), u(rng), 2.0 + std::abs(u(rng)));
  GroundConfig cfg;
  const auto plane = fit_plane_ransac(pts, cfg, 9);
  REQUIRE(plane);
  const Vec3 truth = Vec3(-0.1, 0, 1).normalized();
  const double angle = std::acos(std::clamp(plane->normal().normalized().dot(truth), -1.0, 1.0));
  CHECK(angle < std::numbers::pi / 180.0);
  CHECK(std::abs(plane->a4) < 0.02);
  CHECK(plane->inlier_count >= 80);
}

TEST_CASE("too few samples give no plane") {
  GroundConfig cfg;
  cfg.min_samples = 3;
  CHECK_FALSE(fit_plane_ransac({Vec3(0, 0, 0), Vec3(1, 0, 0)}, cfg, 1));
  CHECK_FALSE(fit_plane_least_squares({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)}));
  cfg.min_samples = 40;
  std::vector<Vec3> few(39, Vec3(1, 2, 3));
  CHECK_FALSE(fit_plane_ransac(few, cfg, 1));
}

TEST_CASE("plane distance") {
  PlaneModel p{0, 0, 1, 0};
  CHECK(plane_distance(p, Vec3(5, 5, 0.1)) == doctest::Approx(0.1));
  PlaneModel tilted{0.3, -0.2, 0.9, 1.5};
  const Vec3 q(1.0, -3.0, 0.4);
  for (double k : {0.5, 2.0, 17.0}) {
    PlaneModel s{tilted.a1 * k, tilted.a2 * k, tilted.a3 * k, tilted.a4 * k};
    CHECK(plane_distance(s, q) == doctest::Approx(plane_distance(tilted, q)));
  }
}

TEST_CASE("sectors") {
  CHECK(sector_of_column(0, 2048, 32) == 0);
  CHECK(sector_of_column(63, 2048, 32) == 0);
  CHECK(sector_of_column(64, 2048, 32) == 1);
  CHECK(sector_of_column(2047, 2048, 32) == 31);
  GroundConfig cfg;
  ProjectionConfig proj;
  proj.cols = 100;
  CHECK_THROWS_AS(cfg.validate(proj), Error);
}

TEST_CASE("flat scan with a pole") {
  ProjectionConfig sensor;
  sensor.cols = 512;
  Scene scene;
  scene.ground = GroundPlane::flat(1.73);
  std::mt19937_64 rng(4);
  scene.objects.push_back(make_ood_object(OodKind::kPole, 8, 0, 0, scene.ground, rng));
  std::vector<std::uint8_t> gt;
  const auto cloud = render(scene, sensor, 21, &gt);
  GroundConfig cfg;
  const auto res = segment_ground(cloud, cfg, 1);
  int pole_cells = 0, pole_ground = 0;
  for (int r = 0; r < cloud.rows(); ++r)
    for (int c = 0; c < cloud.cols(); ++c) {
      if (!cloud.valid(r, c)) {
        CHECK(res.mask(r, c) == 0);
        continue;
      }
      // well above the ground, only the pole is there
      if (cloud.z(r, c) > -1.73 + 0.5) {
        ++pole_cells;
        pole_ground += res.mask(r, c);
      }
    }
  CHECK(pole_cells > 5);
  CHECK(pole_ground == 0);
  const auto score = seg_metrics(cloud, res.mask, gt);
  CHECK(score.precision >= 0.95);
  CHECK(score.recall >= 0.95);
}

TEST_CASE("segmentation is independent of thread count") {
  const auto scene = ground_suite_scene(5, 1.73, 0.1, 0.2);
  ProjectionConfig sensor;
  sensor.cols = 512;
  const auto cloud = render(scene, sensor, 5);
  GroundConfig cfg;
  const auto a = segment_ground(cloud, cfg, 77, 1);
  const auto b = segment_ground(cloud, cfg, 77, 4);
  CHECK(a.mask == b.mask);
  REQUIRE(a.planes.size() == b.planes.size());
  for (std::size_t i = 0; i < a.planes.size(); ++i) CHECK(a.planes[i].a4 == b.planes[i].a4);
}

TEST_CASE("looser plane threshold gives a superset") {
  ProjectionConfig sensor;
  sensor.cols = 512;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto cloud = render(ground_suite_scene(seed, 1.73, 0.15, 0.2), sensor, seed);
    GroundConfig tight;
    tight.plane_threshold = 0.1;
    GroundConfig loose = tight;
    loose.plane_threshold = 0.3;
    const auto a = segment_ground(cloud, tight, seed);
    const auto b = segment_ground(cloud, loose, seed);
    std::size_t na = 0, nb = 0;
    for (std::size_t i = 0; i < a.mask.size(); ++i) {
      CHECK((a.mask[i] <= b.mask[i]));
      na += a.mask[i];
      nb += b.mask[i];
    }
    CHECK(na <= nb);
  }
}

TEST_CASE("empty cloud") {
  ProjectionConfig sensor;
  const auto cloud = project_cloud(PointList{}, sensor);
  const auto res = segment_ground(cloud, GroundConfig{}, 1);
  CHECK(res.planes.empty());
  CHECK(res.mask.size() == cloud.valid.size());
}
