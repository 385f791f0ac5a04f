#pragma once

#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <vector>

#include "pcrd/clustering.hpp"
#include "pcrd/projection.hpp"

namespace pcrd::testing {

/// Organized cloud with piecewise-constant depth patches, holes and ground cells.
inline OrganizedCloud random_depth_image(std::uint64_t seed, int rows, int cols, const ProjectionConfig& proj,
                                         Mask* ground) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  OrganizedCloud cloud{Grid<float>(rows, cols), Grid<float>(rows, cols), Grid<float>(rows, cols),
                       Grid<float>(rows, cols), Mask(rows, cols), Grid<std::int32_t>(rows, cols, -1)};
  *ground = Mask(rows, cols);
  const double levels[] = {3.0, 5.0, 8.0, 15.0, 30.0};
  for (int r = 0; r < rows; ++r) {
    double level = levels[rng() % 5];
    for (int c = 0; c < cols; ++c) {
      if (u(rng) < 0.15) level = levels[rng() % 5];
      if (u(rng) < 0.1) continue;
      const double d = level * (1.0 + 0.08 * (u(rng) - 0.5));
      const double az = column_azimuth(c, cols), el = row_elevation(r, proj);
      cloud.x(r, c) = static_cast<float>(d * std::cos(el) * std::cos(az));
      cloud.y(r, c) = static_cast<float>(d * std::cos(el) * std::sin(az));
      cloud.z(r, c) = static_cast<float>(d * std::sin(el));
      cloud.range_xy(r, c) = std::hypot(cloud.x(r, c), cloud.y(r, c));
      cloud.valid(r, c) = 1;
      cloud.source(r, c) = r * cols + c;
      if (u(rng) < 0.1) (*ground)(r, c) = 1;
    }
  }
  return cloud;
}

/// Reference clustering: union-find over every merge-eligible neighbour pair.
inline Grid<std::int32_t> union_find_labels(const OrganizedCloud& cloud, const Mask& ground,
                                            const ClusterConfig& cfg, const ProjectionConfig& proj) {
  const int h = cloud.rows(), w = cloud.cols();
  std::vector<int> parent(static_cast<std::size_t>(h) * w);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  auto usable = [&](int r, int c) { return cloud.valid(r, c) && !ground(r, c); };
  auto link = [&](int r, int c, int rn, int cn, double alpha) {
    if (!usable(r, c) || !usable(rn, cn)) return;
    const double a = cloud.point(r, c).norm(), b = cloud.point(rn, cn).norm();
    if (merge_angle(std::max(a, b), std::min(a, b), alpha) > cfg.theta) parent[find(r * w + c)] = find(rn * w + cn);
  };
  const double alpha_row = proj.fov() / h, alpha_col = 2 * M_PI / w;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      for (int i = 1; i <= cfg.window_rows; ++i)
        if (r + i < h) link(r, c, r + i, c, alpha_row * i);
      for (int j = 1; j <= cfg.window_cols; ++j) link(r, c, r, (c + j) % w, alpha_col * j);
    }
  std::map<int, int> size;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      if (usable(r, c)) ++size[find(r * w + c)];
  Grid<std::int32_t> out(h, w, 0);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      if (usable(r, c) && size[find(r * w + c)] >= cfg.min_cluster_points) out(r, c) = find(r * w + c) + 1;
  return out;
}

/// Same partition up to relabelling, with 0 meaning "no cluster" in both.
inline bool same_partition(const Grid<std::int32_t>& a, const Grid<std::int32_t>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  std::map<std::int32_t, std::int32_t> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] == 0) != (b[i] == 0)) return false;
    if (a[i] == 0) continue;
    auto [x, fresh_x] = ab.emplace(a[i], b[i]);
    auto [y, fresh_y] = ba.emplace(b[i], a[i]);
    if (x->second != b[i] || y->second != a[i]) return false;
  }
  return true;
}

}  // namespace pcrd::testing
