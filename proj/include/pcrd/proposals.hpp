#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pcrd/clustering.hpp"
#include "pcrd/common.hpp"
#include "pcrd/projection.hpp"

namespace pcrd {

using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3>;

struct ProposalConfig {
  int n_points = 64;
  double max_range = 60.0;
  double voxel_azimuth_deg = 10.0;
  double voxel_elevation_deg = 10.0;
  double voxel_range = 1.0;

  void validate() const;
  int azimuth_bins() const;
  int elevation_bins() const;
  int range_bins() const;
};

/// Spherical voxel holding a proposal's mean point.
struct VoxelCoord {
  int azimuth_idx = 0;
  int elevation_idx = 0;
  int range_idx = 0;
  double azimuth_center = 0;    // radians
  double elevation_center = 0;  // radians
  double range_center = 0;      // meters
};

struct Proposal {
  std::vector<Vec3> points;  // raw cluster points
  Vec3 mean = Vec3::Zero();
  double range = 0;          // |mean|
  double azimuth = 0;        // atan2(mean.y, mean.x); the canonical frame is rotated by -azimuth
  PointMatrix canonical;     // n_points x 3
  VoxelCoord voxel;
  int cluster_id = 0;
};

Vec3 mean_of(const std::vector<Vec3>& points);

/// Subtracts `mean` and rotates about z by -atan2(mean.y, mean.x).
PointMatrix canonicalize(const std::vector<Vec3>& points, const Vec3& mean);

/// Canonical-frame point or direction back to the sensor frame.
Vec3 from_canonical(const Vec3& p, const Vec3& mean);
Vec3 to_canonical(const Vec3& p, const Vec3& mean);

/// Throws kDomain for a zero-norm mean. Boundary values fall into the higher cell.
VoxelCoord voxelize_mean(const Vec3& mean, const ProposalConfig& cfg);

/// PVLE input: voxel centers scaled to roughly [-1, 1].
Eigen::Vector3d voxel_features(const VoxelCoord& v, const ProposalConfig& cfg);

/// Resamples to exactly n_points rows: a random subset when larger, every point plus
/// draws with replacement when smaller. Returns row indices into `count` points.
std::vector<int> resample_indices(int count, int n_points, std::uint64_t seed);

/// Builds a proposal from raw points (no range gating).
Proposal make_proposal(std::vector<Vec3> points, int cluster_id, const ProposalConfig& cfg, std::uint64_t seed);

/// One proposal per cluster with mean range <= max_range, ordered by cluster id.
/// Cluster k resamples with seed `seed + k`.
std::vector<Proposal> extract_proposals(const OrganizedCloud& cloud, const ClusterLabels& labels,
                                        const ProposalConfig& cfg, std::uint64_t seed = 0);

/// Text dump: "cluster_id n_points mean_x mean_y mean_z az_idx el_idx range_idx" per line.
/// When `points_path` is non-empty the raw points are appended there as float32 LE xyz.
void write_proposal_dump(const std::string& text_path, const std::vector<Proposal>& proposals,
                         const std::string& points_path = {});

}  // namespace pcrd
