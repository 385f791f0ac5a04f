#include "pcrd/proposals.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <random>

namespace pcrd {

void ProposalConfig::validate() const {
  if (n_points < 16) fail(ErrorCode::kConfig, "proposal.n_points must be >= 16");
  if (!(max_range > 0)) fail(ErrorCode::kConfig, "proposal.max_range must be > 0");
  if (!(voxel_azimuth_deg > 0) || !(voxel_elevation_deg > 0) || !(voxel_range > 0)) {
    fail(ErrorCode::kConfig, "proposal voxel resolution must be > 0");
  }
}

int ProposalConfig::azimuth_bins() const { return static_cast<int>(std::ceil(360.0 / voxel_azimuth_deg)); }
int ProposalConfig::elevation_bins() const { return static_cast<int>(std::ceil(180.0 / voxel_elevation_deg)); }
int ProposalConfig::range_bins() const { return std::max(1, static_cast<int>(std::ceil(max_range / voxel_range))); }

Vec3 mean_of(const std::vector<Vec3>& points) {
  Vec3 m = Vec3::Zero();
  for (const auto& p : points) m += p;
  return points.empty() ? m : Vec3(m / static_cast<double>(points.size()));
}

PointMatrix canonicalize(const std::vector<Vec3>& points, const Vec3& mean) {
  PointMatrix out(static_cast<Eigen::Index>(points.size()), 3);
  for (std::size_t i = 0; i < points.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = to_canonical(points[i], mean);
  return out;
}

Vec3 to_canonical(const Vec3& p, const Vec3& mean) {
  const double phi = std::atan2(mean.y(), mean.x());
  const double c = std::cos(phi);
  const double s = std::sin(phi);
  const Vec3 d = p - mean;
  return Vec3(c * d.x() + s * d.y(), -s * d.x() + c * d.y(), d.z());
}

Vec3 from_canonical(const Vec3& p, const Vec3& mean) {
  const double phi = std::atan2(mean.y(), mean.x());
  const double c = std::cos(phi);
  const double s = std::sin(phi);
  return mean + Vec3(c * p.x() - s * p.y(), s * p.x() + c * p.y(), p.z());
}

VoxelCoord voxelize_mean(const Vec3& mean, const ProposalConfig& cfg) {
  const double r = mean.norm();
  if (!(r > 0.0)) fail(ErrorCode::kDomain, "voxelize_mean: zero-norm mean");
  constexpr double kDeg = 180.0 / std::numbers::pi;
  // Degrees keep exact grid boundaries exact (e.g. azimuth 0 -> 180 / 10 = 18).
  const double az_deg = std::atan2(mean.y(), mean.x()) * kDeg + 180.0;
  const double el_deg = std::asin(std::clamp(mean.z() / r, -1.0, 1.0)) * kDeg + 90.0;

  VoxelCoord v;
  v.azimuth_idx = std::clamp(static_cast<int>(std::floor(az_deg / cfg.voxel_azimuth_deg)), 0, cfg.azimuth_bins() - 1);
  v.elevation_idx =
      std::clamp(static_cast<int>(std::floor(el_deg / cfg.voxel_elevation_deg)), 0, cfg.elevation_bins() - 1);
  v.range_idx = std::clamp(static_cast<int>(std::floor(r / cfg.voxel_range)), 0, cfg.range_bins() - 1);
  v.azimuth_center = ((v.azimuth_idx + 0.5) * cfg.voxel_azimuth_deg - 180.0) / kDeg;
  v.elevation_center = ((v.elevation_idx + 0.5) * cfg.voxel_elevation_deg - 90.0) / kDeg;
  v.range_center = (v.range_idx + 0.5) * cfg.voxel_range;
  return v;
}

Eigen::Vector3d voxel_features(const VoxelCoord& v, const ProposalConfig& cfg) {
  return {v.azimuth_center / std::numbers::pi, v.elevation_center / (std::numbers::pi / 2),
          v.range_center / cfg.max_range};
}

std::vector<int> resample_indices(int count, int n_points, std::uint64_t seed) {
  std::vector<int> idx(static_cast<std::size_t>(count));
  std::iota(idx.begin(), idx.end(), 0);
  if (count == n_points || count == 0) return idx;
  std::mt19937_64 rng(seed);
  if (count > n_points) {
    // Partial Fisher-Yates: the first n_points entries become a uniform subset.
    for (int i = 0; i < n_points; ++i) {
      std::uniform_int_distribution<int> pick(i, count - 1);
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
    }
    idx.resize(static_cast<std::size_t>(n_points));
    return idx;
  }
  std::uniform_int_distribution<int> pick(0, count - 1);
  while (static_cast<int>(idx.size()) < n_points) idx.push_back(pick(rng));
  return idx;
}

Proposal make_proposal(std::vector<Vec3> points, int cluster_id, const ProposalConfig& cfg, std::uint64_t seed) {
  if (points.empty()) fail(ErrorCode::kInvalidInput, "make_proposal: empty cluster");
  Proposal p;
  p.points = std::move(points);
  p.cluster_id = cluster_id;
  p.mean = mean_of(p.points);
  p.range = p.mean.norm();
  p.azimuth = std::atan2(p.mean.y(), p.mean.x());
  const auto idx = resample_indices(static_cast<int>(p.points.size()), cfg.n_points, seed);
  const PointMatrix all = canonicalize(p.points, p.mean);
  p.canonical.resize(static_cast<Eigen::Index>(idx.size()), 3);
  for (std::size_t i = 0; i < idx.size(); ++i) p.canonical.row(static_cast<Eigen::Index>(i)) = all.row(idx[i]);
  p.voxel = voxelize_mean(p.range > 0 ? p.mean : Vec3(1e-9, 0, 0), cfg);
  return p;
}

std::vector<Proposal> extract_proposals(const OrganizedCloud& cloud, const ClusterLabels& labels,
                                        const ProposalConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::vector<std::vector<Vec3>> groups(static_cast<std::size_t>(labels.count) + 1);
  for (int r = 0; r < cloud.rows(); ++r) {
    for (int c = 0; c < cloud.cols(); ++c) {
      const auto id = labels.labels(r, c);
      if (id > 0) groups[static_cast<std::size_t>(id)].push_back(cloud.point(r, c));
    }
  }
  std::vector<Proposal> out;
  for (int id = 1; id <= labels.count; ++id) {
    auto& pts = groups[static_cast<std::size_t>(id)];
    if (pts.empty()) continue;
    const Vec3 m = mean_of(pts);
    if (m.norm() > cfg.max_range || !(m.norm() > 0)) continue;
    out.push_back(make_proposal(std::move(pts), id, cfg, seed + static_cast<std::uint64_t>(id)));
  }
  return out;
}

void write_proposal_dump(const std::string& text_path, const std::vector<Proposal>& proposals,
                         const std::string& points_path) {
  std::ofstream txt(text_path);
  if (!txt) fail(ErrorCode::kIo, "cannot write " + text_path);
  txt << std::setprecision(9);
  for (const auto& p : proposals) {
    txt << p.cluster_id << ' ' << p.points.size() << ' ' << p.mean.x() << ' ' << p.mean.y() << ' ' << p.mean.z()
        << ' ' << p.voxel.azimuth_idx << ' ' << p.voxel.elevation_idx << ' ' << p.voxel.range_idx << '\n';
  }
  if (points_path.empty()) return;
  std::ofstream bin(points_path, std::ios::binary);
  if (!bin) fail(ErrorCode::kIo, "cannot write " + points_path);
  for (const auto& p : proposals) {
    for (const auto& q : p.points) {
      for (int k = 0; k < 3; ++k) {
        const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(q[k]));
        const unsigned char b[4] = {static_cast<unsigned char>(u), static_cast<unsigned char>(u >> 8),
                                    static_cast<unsigned char>(u >> 16), static_cast<unsigned char>(u >> 24)};
        bin.write(reinterpret_cast<const char*>(b), 4);
      }
    }
  }
}

}  // namespace pcrd
