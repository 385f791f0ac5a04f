#include "pcrd/clustering.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace pcrd {

void ClusterConfig::validate() const {
  if (!(theta > 0.0 && theta < std::numbers::pi / 2)) fail(ErrorCode::kConfig, "cluster.theta must be in (0, pi/2)");
  if (window_rows < 1 || window_cols < 1) fail(ErrorCode::kConfig, "cluster window extents must be >= 1");
  if (min_cluster_points < 1) fail(ErrorCode::kConfig, "cluster.min_cluster_points must be >= 1");
}

double merge_angle(double d1, double d2, double alpha) {
  if (!(d2 > 0.0) || !(d1 >= d2)) fail(ErrorCode::kDomain, "merge_angle requires d1 >= d2 > 0");
  return std::atan2(d2 * std::sin(alpha), d1 - d2 * std::cos(alpha));
}

namespace {

struct Offset {
  int dr;
  int dc;
  double sin_alpha_theta;  // sin(alpha * gap + theta)
};

}  // namespace

ClusterLabels cluster_depth(const OrganizedCloud& cloud, const Mask& ground, const ClusterConfig& cfg,
                            const ProjectionConfig& proj) {
  cfg.validate();
  const int h = cloud.rows();
  const int w = cloud.cols();
  if (ground.rows() != h || ground.cols() != w) fail(ErrorCode::kInvalidInput, "ground mask shape mismatch");

  ClusterLabels out{Grid<std::int32_t>(h, w, 0), 0};
  if (h == 0 || w == 0) return out;

  // atan2(y, x) > theta with y > 0  <=>  d2 * sin(alpha + theta) > d1 * sin(theta).
  const double alpha_col = 2.0 * std::numbers::pi / w;
  const double alpha_row = proj.fov() / h;
  const double sin_theta = std::sin(cfg.theta);
  std::vector<Offset> offsets;
  for (int i = 1; i <= cfg.window_rows; ++i) {
    const double s = std::sin(alpha_row * i + cfg.theta);
    offsets.push_back({-i, 0, s});
    offsets.push_back({i, 0, s});
  }
  // Columns wrap, so a window wider than the image would revisit cells; harmless.
  for (int j = 1; j <= cfg.window_cols; ++j) {
    const double s = std::sin(alpha_col * j + cfg.theta);
    offsets.push_back({0, -j, s});
    offsets.push_back({0, j, s});
  }

  Grid<double> range(h, w, 0.0);
  Mask usable(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (cloud.valid(r, c) && !ground(r, c)) {
        usable(r, c) = 1;
        range(r, c) = cloud.point(r, c).norm();
      }
    }
  }

  std::vector<std::int32_t> raw_sizes{0};
  std::vector<int> queue;
  queue.reserve(static_cast<std::size_t>(h) * w);
  std::int32_t next = 1;
  for (int r0 = 0; r0 < h; ++r0) {
    for (int c0 = 0; c0 < w; ++c0) {
      if (!usable(r0, c0) || out.labels(r0, c0) != 0) continue;
      const std::int32_t label = next++;
      std::int32_t size = 0;
      queue.clear();
      queue.push_back(r0 * w + c0);
      out.labels(r0, c0) = label;
      for (std::size_t head = 0; head < queue.size(); ++head) {
        const int r = queue[head] / w;
        const int c = queue[head] % w;
        ++size;
        const double dr = range(r, c);
        for (const Offset& o : offsets) {
          const int rn = r + o.dr;
          if (rn < 0 || rn >= h) continue;
          int cn = (c + o.dc) % w;
          if (cn < 0) cn += w;
          if (!usable(rn, cn) || out.labels(rn, cn) != 0) continue;
          const double dn = range(rn, cn);
          const double d1 = dr > dn ? dr : dn;
          const double d2 = dr > dn ? dn : dr;
          if (d2 * o.sin_alpha_theta > d1 * sin_theta) {
            out.labels(rn, cn) = label;
            queue.push_back(rn * w + cn);
          }
        }
      }
      raw_sizes.push_back(size);
    }
  }

  // Drop small clusters and renumber survivors contiguously in first-seen order.
  std::vector<std::int32_t> remap(raw_sizes.size(), 0);
  std::int32_t kept = 0;
  for (std::size_t id = 1; id < raw_sizes.size(); ++id) {
    if (raw_sizes[id] >= cfg.min_cluster_points) remap[id] = ++kept;
  }
  for (auto& v : out.labels.data()) v = remap[static_cast<std::size_t>(v)];
  out.count = kept;
  return out;
}

}  // namespace pcrd
