#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "pcrd/common.hpp"
#include "pcrd/projection.hpp"

namespace pcrd {

struct GroundConfig {
  double slope_threshold = 0.25;      // |dZ/dR| bound for sampling
  double horizontal_threshold = 0.5;  // |S_u * R| bound for sampling, meters
  double plane_threshold = 0.2;       // |point-to-plane distance| below this is ground, meters
  int sectors = 32;
  int ransac_iters = 25;
  double ransac_inlier_threshold = 0.2;
  int min_samples = 40;

  void validate(const ProjectionConfig& proj) const;
};

/// a1*x + a2*y + a3*z + a4 = 0 with a unit normal and a3 >= 0.
struct PlaneModel {
  double a1 = 0, a2 = 0, a3 = 1, a4 = 0;
  int sector = 0;
  int inlier_count = 0;

  Vec3 normal() const { return Vec3(a1, a2, a3); }
};

/// Signed point-to-plane distance; invariant under scaling of the coefficients.
double plane_distance(const PlaneModel& plane, const Vec3& p);

/// Per-cell outputs of the two derivative filters. `vertical_ok` / `horizontal_ok`
/// mark cells where every tap was valid (and the vertical denominator was usable).
struct NormalProxies {
  Grid<float> slope;       // (S_v * Z) / (S_v * R)
  Grid<float> horizontal;  // S_u * R
  Mask vertical_ok;
  Mask horizontal_ok;

  bool computable(int r, int c) const { return vertical_ok(r, c) && horizontal_ok(r, c); }
};

inline constexpr double kSlopeDenominatorEpsilon = 1e-6;

/// S_v = [[2, 1], [-2, -1]] anchored at its top-left tap; S_u = [1, 2, -2, -1] anchored
/// at its second tap. Columns wrap around the azimuth seam; rows do not.
NormalProxies normal_proxies(const Grid<float>& range_xy, const Grid<float>& z, const Mask& valid);

int sector_of_column(int col, int cols, int sectors);

/// Cartesian coordinates of cells passing both derivative thresholds, grouped by sector.
std::vector<std::vector<Vec3>> sample_ground(const NormalProxies& proxies, const OrganizedCloud& cloud,
                                             const GroundConfig& cfg);

/// RANSAC over one sector's samples followed by a least-squares refit on the winning
/// inlier set. Returns nullopt when there are too few samples or every draw was collinear.
std::optional<PlaneModel> fit_plane_ransac(const std::vector<Vec3>& samples, const GroundConfig& cfg,
                                           std::uint64_t seed);

/// Total least-squares plane through the points (normal = smallest principal axis).
std::optional<PlaneModel> fit_plane_least_squares(const std::vector<Vec3>& points);

struct GroundResult {
  Mask mask;                       // 1 = ground; only ever set on valid cells
  std::vector<PlaneModel> planes;  // one per sector that produced a plane
};

/// Full ground segmentation. Sector s uses RNG seed `seed + s`, so the result is
/// independent of `threads`.
GroundResult segment_ground(const OrganizedCloud& cloud, const GroundConfig& cfg, std::uint64_t seed,
                            int threads = 1);

}  // namespace pcrd
