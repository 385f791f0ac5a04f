#include "pcrd/ground.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

#include <Eigen/Eigenvalues>

namespace pcrd {

void GroundConfig::validate(const ProjectionConfig& proj) const {
  if (!(slope_threshold > 0) || !(horizontal_threshold > 0) || !(plane_threshold > 0) ||
      !(ransac_inlier_threshold > 0)) {
    fail(ErrorCode::kConfig, "ground thresholds must be > 0");
  }
  if (sectors < 1 || proj.cols % sectors != 0) {
    fail(ErrorCode::kConfig, "ground.sectors must be >= 1 and divide projection.cols");
  }
  if (ransac_iters < 1) fail(ErrorCode::kConfig, "ground.ransac_iters must be >= 1");
  if (min_samples < 3) fail(ErrorCode::kConfig, "ground.min_samples must be >= 3");
}

double plane_distance(const PlaneModel& plane, const Vec3& p) {
  const double n = std::sqrt(plane.a1 * plane.a1 + plane.a2 * plane.a2 + plane.a3 * plane.a3);
  return (plane.a1 * p.x() + plane.a2 * p.y() + plane.a3 * p.z() + plane.a4) / n;
}

NormalProxies normal_proxies(const Grid<float>& range_xy, const Grid<float>& z, const Mask& valid) {
  const int h = valid.rows();
  const int w = valid.cols();
  NormalProxies out{Grid<float>(h, w), Grid<float>(h, w), Mask(h, w), Mask(h, w)};
  if (w < 4) return out;

  for (int r = 0; r < h; ++r) {
    const float* rr = &range_xy(r, 0);
    const float* zr = &z(r, 0);
    const std::uint8_t* vr = &valid(r, 0);
    const bool has_next = r + 1 < h;
    const float* rn = has_next ? &range_xy(r + 1, 0) : rr;
    const float* zn = has_next ? &z(r + 1, 0) : zr;
    const std::uint8_t* vn = has_next ? &valid(r + 1, 0) : vr;
    float* hz = &out.horizontal(r, 0);
    float* sl = &out.slope(r, 0);
    std::uint8_t* hok = &out.horizontal_ok(r, 0);
    std::uint8_t* vok = &out.vertical_ok(r, 0);

    auto cell = [&](int cm1, int c, int cp1, int cp2) {
      if (vr[cm1] & vr[c] & vr[cp1] & vr[cp2]) {
        hz[c] = rr[cm1] + 2.0f * rr[c] - 2.0f * rr[cp1] - rr[cp2];
        hok[c] = 1;
      }
      if (has_next && (vr[c] & vr[cp1] & vn[c] & vn[cp1])) {
        const double dz = 2.0 * zr[c] + zr[cp1] - 2.0 * zn[c] - zn[cp1];
        const double dr = 2.0 * rr[c] + rr[cp1] - 2.0 * rn[c] - rn[cp1];
        if (std::abs(dr) >= kSlopeDenominatorEpsilon) {
          sl[c] = static_cast<float>(dz / dr);
          vok[c] = 1;
        }
      }
    };
    cell(w - 1, 0, 1, 2);
    for (int c = 1; c + 2 < w; ++c) cell(c - 1, c, c + 1, c + 2);
    cell(w - 3, w - 2, w - 1, 0);
    cell(w - 2, w - 1, 0, 1);
  }
  return out;
}

int sector_of_column(int col, int cols, int sectors) { return col / (cols / sectors); }

std::vector<std::vector<Vec3>> sample_ground(const NormalProxies& proxies, const OrganizedCloud& cloud,
                                             const GroundConfig& cfg) {
  std::vector<std::vector<Vec3>> samples(static_cast<std::size_t>(cfg.sectors));
  const int w = cloud.cols();
  const int width = w / cfg.sectors;
  for (auto& s : samples) s.reserve(static_cast<std::size_t>(cloud.rows()) * width);
  const float slope_th = static_cast<float>(cfg.slope_threshold);
  const float horiz_th = static_cast<float>(cfg.horizontal_threshold);
  for (int r = 0; r < cloud.rows(); ++r) {
    for (int s = 0; s < cfg.sectors; ++s) {
      auto& dst = samples[static_cast<std::size_t>(s)];
      for (int c = s * width; c < (s + 1) * width; ++c) {
        if (!proxies.computable(r, c)) continue;
        if (std::abs(proxies.slope(r, c)) > slope_th) continue;
        if (std::abs(proxies.horizontal(r, c)) > horiz_th) continue;
        dst.emplace_back(cloud.x(r, c), cloud.y(r, c), cloud.z(r, c));
      }
    }
  }
  return samples;
}

std::optional<PlaneModel> fit_plane_least_squares(const std::vector<Vec3>& points) {
  if (points.size() < 3) return std::nullopt;
  Vec3 mean = Vec3::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : points) {
    const Vec3 d = p - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  if (eig.info() != Eigen::Success) return std::nullopt;
  // Eigenvalues ascend; two vanishing ones mean the points are collinear.
  if (!(eig.eigenvalues()(1) > 1e-12 * std::max(1.0, eig.eigenvalues()(2)))) return std::nullopt;
  Vec3 n = eig.eigenvectors().col(0).normalized();
  if (n.z() < 0) n = -n;
  PlaneModel plane{n.x(), n.y(), n.z(), -n.dot(mean), 0, static_cast<int>(points.size())};
  return plane;
}

std::optional<PlaneModel> fit_plane_ransac(const std::vector<Vec3>& samples, const GroundConfig& cfg,
                                           std::uint64_t seed) {
  const auto n = samples.size();
  if (n < static_cast<std::size_t>(std::max(cfg.min_samples, 3))) return std::nullopt;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  const double th = cfg.ransac_inlier_threshold;

  // Candidate scoring runs on a float copy; the refit below uses the double samples.
  std::vector<float> xs(n), ys(n), zs(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = static_cast<float>(samples[i].x());
    ys[i] = static_cast<float>(samples[i].y());
    zs[i] = static_cast<float>(samples[i].z());
  }
  const float thf = static_cast<float>(th);

  int best_count = -1;
  Vec3 best_normal = Vec3::Zero();
  double best_offset = 0.0;
  for (int it = 0; it < cfg.ransac_iters; ++it) {
    const std::size_t i0 = pick(rng);
    std::size_t i1 = pick(rng);
    while (i1 == i0) i1 = pick(rng);
    std::size_t i2 = pick(rng);
    while (i2 == i0 || i2 == i1) i2 = pick(rng);

    const Vec3 e1 = samples[i1] - samples[i0];
    const Vec3 e2 = samples[i2] - samples[i0];
    Vec3 normal = e1.cross(e2);
    const double len = normal.norm();
    if (!(len > 1e-9 * std::max(1.0, e1.norm() * e2.norm()))) continue;  // collinear draw
    normal /= len;
    const double offset = -normal.dot(samples[i0]);

    const float nx = static_cast<float>(normal.x()), ny = static_cast<float>(normal.y());
    const float nz = static_cast<float>(normal.z()), off = static_cast<float>(offset);
    int count = 0;
    for (std::size_t i = 0; i < n; ++i) count += std::abs(nx * xs[i] + ny * ys[i] + nz * zs[i] + off) <= thf;
    if (count > best_count) {
      best_count = count;
      best_normal = normal;
      best_offset = offset;
    }
  }
  if (best_count < 3) return std::nullopt;

  std::vector<Vec3> inliers;
  inliers.reserve(static_cast<std::size_t>(best_count));
  for (const auto& p : samples) {
    if (std::abs(best_normal.dot(p) + best_offset) <= th) inliers.push_back(p);
  }
  auto refit = fit_plane_least_squares(inliers);
  if (!refit) {
    Vec3 nrm = best_normal;
    double off = best_offset;
    if (nrm.z() < 0) {
      nrm = -nrm;
      off = -off;
    }
    refit = PlaneModel{nrm.x(), nrm.y(), nrm.z(), off, 0, 0};
  }
  int count = 0;
  for (const auto& p : samples) {
    if (std::abs(plane_distance(*refit, p)) <= th) ++count;
  }
  refit->inlier_count = count;
  return refit;
}

GroundResult segment_ground(const OrganizedCloud& cloud, const GroundConfig& cfg, std::uint64_t seed,
                            int threads) {
  const int h = cloud.rows();
  const int w = cloud.cols();
  GroundResult out{Mask(h, w), {}};
  if (h == 0 || w == 0) return out;
  if (cfg.sectors < 1 || w % cfg.sectors != 0) fail(ErrorCode::kConfig, "ground.sectors must divide the cloud width");

  const NormalProxies proxies = normal_proxies(cloud.range_xy, cloud.z, cloud.valid);
  const auto samples = sample_ground(proxies, cloud, cfg);
  const int width = w / cfg.sectors;

  std::vector<std::optional<PlaneModel>> planes(static_cast<std::size_t>(cfg.sectors));
  auto work = [&](int first, int last) {
    for (int s = first; s < last; ++s) {
      auto plane = fit_plane_ransac(samples[s], cfg, seed + static_cast<std::uint64_t>(s));
      if (!plane) continue;
      plane->sector = s;
      const double len = plane->normal().norm();
      const double a1 = plane->a1 / len, a2 = plane->a2 / len, a3 = plane->a3 / len, a4 = plane->a4 / len;
      // Each sector writes a disjoint column band of the mask.
      for (int r = 0; r < h; ++r) {
        for (int c = s * width; c < (s + 1) * width; ++c) {
          if (cloud.valid(r, c) &&
              std::abs(a1 * cloud.x(r, c) + a2 * cloud.y(r, c) + a3 * cloud.z(r, c) + a4) < cfg.plane_threshold) {
            out.mask(r, c) = 1;
          }
        }
      }
      planes[s] = plane;
    }
  };

  threads = std::clamp(threads, 1, cfg.sectors);
  if (threads == 1) {
    work(0, cfg.sectors);
  } else {
    std::vector<std::jthread> pool;
    const int chunk = (cfg.sectors + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const int first = t * chunk;
      const int last = std::min(cfg.sectors, first + chunk);
      if (first < last) pool.emplace_back(work, first, last);
    }
  }

  for (auto& p : planes) {
    if (p) out.planes.push_back(*p);
  }
  return out;
}

}  // namespace pcrd
