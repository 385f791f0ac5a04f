#pragma once

#include <cstdint>

#include "pcrd/common.hpp"
#include "pcrd/projection.hpp"

namespace pcrd {

struct ClusterConfig {
  double theta = 10.0 * 3.14159265358979323846 / 180.0;  // merge when the angle exceeds this
  int window_rows = 2;  // neighbors up to this many rows away (same column)
  int window_cols = 3;  // neighbors up to this many columns away (same row), wrapping
  int min_cluster_points = 10;

  void validate() const;
};

/// 0 = unlabeled (ground, invalid, or dropped as too small); 1..K = cluster id.
struct ClusterLabels {
  Grid<std::int32_t> labels;
  int count = 0;
};

/// Angle at the farther point of the triangle (sensor, p1, p2) seen from the nearer one:
/// atan2(d2 sin(alpha), d1 - d2 cos(alpha)) with d1 = far range, d2 = near range.
/// Throws kDomain unless d1 >= d2 > 0.
double merge_angle(double d1, double d2, double alpha);

/// BFS depth clustering over valid, non-ground cells.
ClusterLabels cluster_depth(const OrganizedCloud& cloud, const Mask& ground, const ClusterConfig& cfg,
                            const ProjectionConfig& proj);

}  // namespace pcrd
