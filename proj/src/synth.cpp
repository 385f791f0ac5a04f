#include "pcrd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>

namespace pcrd {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t s = seed ^ (index * 0xd1b54a32d192ed03ULL);
  splitmix64(s);
  return splitmix64(s);
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = std::numbers::pi;

/// Cheap per-cell generator so every ray draws from its own stream.
struct CellRng {
  std::uint64_t state;
  double uniform() { return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53; }
  double gaussian() {
    const double u1 = std::max(uniform(), 1e-300);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vec3 to_local(const Shape& s, const Vec3& v) {
  const double c = std::cos(s.yaw), sn = std::sin(s.yaw);
  return {c * v.x() + sn * v.y(), -sn * v.x() + c * v.y(), v.z()};
}

/// Smallest root of a t^2 + b t + c = 0 that is > eps, or +inf.
double first_root(double a, double b, double c) {
  if (a <= 0) return kInf;
  const double disc = b * b - 4 * a * c;
  if (disc < 0) return kInf;
  const double sq = std::sqrt(disc);
  const double t0 = (-b - sq) / (2 * a);
  const double t1 = (-b + sq) / (2 * a);
  if (t0 > 1e-9) return t0;
  if (t1 > 1e-9) return t1;
  return kInf;
}

}  // namespace

double intersect(const Shape& s, const Vec3& origin, const Vec3& dir) {
  const Vec3 o = to_local(s, origin - s.center);
  const Vec3 d = to_local(s, dir);
  const Vec3& h = s.half;
  switch (s.kind) {
    case Shape::Kind::kBox: {
      double lo = -kInf, hi = kInf;
      for (int i = 0; i < 3; ++i) {
        if (std::abs(d[i]) < 1e-12) {
          if (std::abs(o[i]) > h[i]) return kInf;
          continue;
        }
        double t1 = (-h[i] - o[i]) / d[i];
        double t2 = (h[i] - o[i]) / d[i];
        if (t1 > t2) std::swap(t1, t2);
        lo = std::max(lo, t1);
        hi = std::min(hi, t2);
      }
      if (hi < lo || hi <= 1e-9) return kInf;
      return lo > 1e-9 ? lo : hi;
    }
    case Shape::Kind::kCylinder: {
      const double ox = o.x() / h.x(), oy = o.y() / h.y();
      const double dx = d.x() / h.x(), dy = d.y() / h.y();
      double best = kInf;
      const double a = dx * dx + dy * dy;
      if (a > 0) {
        const double b = 2 * (ox * dx + oy * dy);
        const double c = ox * ox + oy * oy - 1;
        const double disc = b * b - 4 * a * c;
        if (disc >= 0) {
          const double sq = std::sqrt(disc);
          for (double t : {(-b - sq) / (2 * a), (-b + sq) / (2 * a)}) {
            if (t > 1e-9 && std::abs(o.z() + t * d.z()) <= h.z()) {
              best = std::min(best, t);
              break;
            }
          }
        }
      }
      if (std::abs(d.z()) > 1e-12) {
        for (double zc : {-h.z(), h.z()}) {
          const double t = (zc - o.z()) / d.z();
          const double x = ox + t * dx, y = oy + t * dy;
          if (t > 1e-9 && x * x + y * y <= 1.0) best = std::min(best, t);
        }
      }
      return best;
    }
    case Shape::Kind::kEllipsoid: {
      const Vec3 os = o.cwiseQuotient(h);
      const Vec3 ds = d.cwiseQuotient(h);
      return first_root(ds.squaredNorm(), 2 * os.dot(ds), os.squaredNorm() - 1);
    }
  }
  return kInf;
}

GroundPlane GroundPlane::tilted(double sensor_height, double tilt, double direction) {
  // Rises by tan(tilt) per meter towards `direction`.
  const Vec3 n = Vec3(-std::sin(tilt) * std::cos(direction), -std::sin(tilt) * std::sin(direction), std::cos(tilt));
  return {n, n.z() * sensor_height};
}

double GroundPlane::height_at(double x, double y) const {
  return -(normal.x() * x + normal.y() * y + d) / normal.z();
}

const char* ood_kind_name(OodKind k) {
  switch (k) {
    case OodKind::kWall: return "wall";
    case OodKind::kPole: return "pole";
    case OodKind::kBush: return "bush";
    case OodKind::kBlob: return "blob";
    case OodKind::kTree: return "tree";
  }
  return "clutter";
}

namespace {

/// Shape in object coordinates (x forward along yaw, z up from the ground) placed in the world.
Shape place(Shape::Kind kind, const Vec3& local_center, const Vec3& half, double x, double y, double yaw,
            double ground_z) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  Shape out;
  out.kind = kind;
  out.half = half;
  out.yaw = yaw;
  out.center = Vec3(x + c * local_center.x() - s * local_center.y(), y + s * local_center.x() + c * local_center.y(),
                    ground_z + local_center.z());
  return out;
}

/// Tightest box in the object's yaw frame around every shape's bounding box.
Box3 enclose(const std::vector<Shape>& shapes, double x, double y, double yaw) {
  Vec3 lo = Vec3::Constant(kInf), hi = Vec3::Constant(-kInf);
  for (const auto& s : shapes) {
    for (const auto& corner : box_corners(s.center, 2.0 * s.half, s.yaw)) {
      const Vec3 rel = corner - Vec3(x, y, 0);
      const Vec3 local(std::cos(yaw) * rel.x() + std::sin(yaw) * rel.y(),
                       -std::sin(yaw) * rel.x() + std::cos(yaw) * rel.y(), rel.z());
      lo = lo.cwiseMin(local);
      hi = hi.cwiseMax(local);
    }
  }
  const Vec3 mid = 0.5 * (lo + hi);
  Box3 b;
  b.center = Vec3(x + std::cos(yaw) * mid.x() - std::sin(yaw) * mid.y(),
                  y + std::sin(yaw) * mid.x() + std::cos(yaw) * mid.y(), mid.z());
  b.size = hi - lo;
  b.yaw = wrap_angle(yaw);
  return b;
}

}  // namespace

SceneObject make_id_object(ObjectClass cls, double x, double y, double yaw, const GroundPlane& ground,
                           std::mt19937_64& rng) {
  using K = Shape::Kind;
  const double gz = ground.height_at(x, y);
  SceneObject obj;
  obj.label = static_cast<int>(cls);
  obj.kind = class_name(cls);
  double l = 0, w = 0, h = 0;
  switch (cls) {
    case ObjectClass::kCar: {
      l = uniform(rng, 3.6, 4.4);
      w = uniform(rng, 1.55, 1.85);
      h = uniform(rng, 1.4, 1.65);
      const double body_top = 0.6 * h;
      obj.shapes.push_back(place(K::kBox, {0, 0, 0.5 * (0.2 + body_top)}, {l / 2, w / 2, 0.5 * (body_top - 0.2)}, x, y,
                                 yaw, gz));
      const double cabin_l = uniform(rng, 0.5, 0.6) * l;
      const double back = uniform(rng, 0.0, 0.08) * l;
      obj.shapes.push_back(place(K::kBox, {-back, 0, 0.5 * (body_top + h)}, {cabin_l / 2, 0.44 * w, 0.5 * (h - body_top)},
                                 x, y, yaw, gz));
      break;
    }
    case ObjectClass::kPedestrian: {
      l = uniform(rng, 0.6, 0.9);
      w = uniform(rng, 0.5, 0.7);
      h = uniform(rng, 1.5, 1.9);
      const double body_top = h - 0.22;
      obj.shapes.push_back(place(K::kCylinder, {0, 0, body_top / 2}, {l / 2, w / 2, body_top / 2}, x, y, yaw, gz));
      obj.shapes.push_back(place(K::kEllipsoid, {0, 0, h - 0.12}, {0.11, 0.1, 0.12}, x, y, yaw, gz));
      break;
    }
    case ObjectClass::kCyclist: {
      l = uniform(rng, 1.6, 1.9);
      w = uniform(rng, 0.5, 0.7);
      h = uniform(rng, 1.6, 1.85);
      obj.shapes.push_back(place(K::kBox, {0, 0, 0.5}, {l / 2, 0.06, 0.5}, x, y, yaw, gz));
      const double rider_bottom = 0.8;
      const double rider_top = h - 0.22;
      obj.shapes.push_back(place(K::kCylinder, {-0.1, 0, 0.5 * (rider_bottom + rider_top)},
                                 {0.22, w / 2, 0.5 * (rider_top - rider_bottom)}, x, y, yaw, gz));
      obj.shapes.push_back(place(K::kEllipsoid, {-0.05, 0, h - 0.12}, {0.11, 0.1, 0.12}, x, y, yaw, gz));
      break;
    }
  }
  obj.box.center = Vec3(x, y, gz + h / 2);
  obj.box.size = Vec3(l, w, h);
  obj.box.yaw = wrap_angle(yaw);
  return obj;
}

SceneObject make_ood_object(OodKind kind, double x, double y, double yaw, const GroundPlane& ground,
                            std::mt19937_64& rng) {
  using K = Shape::Kind;
  const double gz = ground.height_at(x, y);
  SceneObject obj;
  obj.kind = ood_kind_name(kind);
  switch (kind) {
    case OodKind::kWall: {
      const double l = uniform(rng, 4.0, 12.0), w = uniform(rng, 0.2, 0.4), h = uniform(rng, 1.0, 3.0);
      obj.shapes.push_back(place(K::kBox, {0, 0, h / 2}, {l / 2, w / 2, h / 2}, x, y, yaw, gz));
      break;
    }
    case OodKind::kPole: {
      const double r = uniform(rng, 0.06, 0.2), h = uniform(rng, 2.5, 6.0);
      obj.shapes.push_back(place(K::kCylinder, {0, 0, h / 2}, {r, r, h / 2}, x, y, yaw, gz));
      if (uniform(rng, 0, 1) < 0.5) {
        obj.shapes.push_back(place(K::kBox, {0, 0, h - 0.4}, {0.03, uniform(rng, 0.25, 0.5), 0.3}, x, y, yaw, gz));
      }
      break;
    }
    case OodKind::kBush: {
      const Vec3 half(uniform(rng, 0.4, 1.5), uniform(rng, 0.4, 1.5), uniform(rng, 0.3, 1.0));
      Shape s = place(K::kEllipsoid, {0, 0, 0.9 * half.z()}, half, x, y, yaw, gz);
      s.porosity = 0.4;
      s.jitter = 0.15;
      obj.shapes.push_back(s);
      break;
    }
    case OodKind::kBlob: {
      const int parts = std::uniform_int_distribution<int>(2, 4)(rng);
      for (int i = 0; i < parts; ++i) {
        const Vec3 half(uniform(rng, 0.15, 0.6), uniform(rng, 0.15, 0.6), uniform(rng, 0.15, 0.6));
        const Vec3 at(uniform(rng, -0.6, 0.6), uniform(rng, -0.6, 0.6), half.z() + uniform(rng, 0.0, 0.3));
        const K k = i % 2 == 0 ? K::kEllipsoid : K::kBox;
        obj.shapes.push_back(place(k, at, half, x, y, yaw + uniform(rng, -kPi, kPi), gz));
      }
      break;
    }
    case OodKind::kTree: {
      const double r = uniform(rng, 0.1, 0.3), trunk = uniform(rng, 1.5, 3.0);
      obj.shapes.push_back(place(K::kCylinder, {0, 0, trunk / 2}, {r, r, trunk / 2}, x, y, yaw, gz));
      const Vec3 crown(uniform(rng, 1.0, 2.5), uniform(rng, 1.0, 2.5), uniform(rng, 1.0, 2.0));
      Shape s = place(K::kEllipsoid, {0, 0, trunk + 0.8 * crown.z()}, crown, x, y, yaw, gz);
      s.porosity = 0.3;
      s.jitter = 0.2;
      obj.shapes.push_back(s);
      break;
    }
  }
  obj.box = enclose(obj.shapes, x, y, yaw);
  return obj;
}

SceneObject make_obstacle(double x, double y, const GroundPlane& ground, std::mt19937_64& rng) {
  const double gz = ground.height_at(x, y);
  const double yaw = uniform(rng, -kPi, kPi);
  SceneObject obj;
  obj.kind = "obstacle";
  if (uniform(rng, 0, 1) < 0.5) {
    const double l = uniform(rng, 0.5, 4.0), w = uniform(rng, 0.5, 2.5), h = uniform(rng, 0.5, 2.5);
    obj.shapes.push_back(place(Shape::Kind::kBox, {0, 0, h / 2}, {l / 2, w / 2, h / 2}, x, y, yaw, gz));
  } else {
    const double r = uniform(rng, 0.2, 1.0), h = uniform(rng, 0.5, 3.0);
    obj.shapes.push_back(place(Shape::Kind::kCylinder, {0, 0, h / 2}, {r, r, h / 2}, x, y, yaw, gz));
  }
  obj.box = enclose(obj.shapes, x, y, yaw);
  return obj;
}

SceneObject make_outlier_obstacle(double x, double y, const GroundPlane& ground, std::mt19937_64& rng) {
  const double gz = ground.height_at(x, y);
  const double yaw = uniform(rng, -kPi, kPi);
  SceneObject obj;
  if (uniform(rng, 0, 1) < 0.5) {
    obj.kind = "overhang";
    const double bottom = uniform(rng, 0.5, 2.0), t = uniform(rng, 0.2, 1.0);
    const double l = uniform(rng, 0.5, 3.0), w = uniform(rng, 0.5, 3.0);
    obj.shapes.push_back(place(Shape::Kind::kBox, {0, 0, bottom + t / 2}, {l / 2, w / 2, t / 2}, x, y, yaw, gz));
  } else {
    obj.kind = "low";
    const double h = uniform(rng, 0.3, 0.5);
    const double l = uniform(rng, 0.3, 2.0), w = uniform(rng, 0.3, 2.0);
    obj.shapes.push_back(place(Shape::Kind::kBox, {0, 0, h / 2}, {l / 2, w / 2, h / 2}, x, y, yaw, gz));
  }
  obj.box = enclose(obj.shapes, x, y, yaw);
  return obj;
}

// ---- Rendering --------------------------------------------------------------------------

namespace {

Vec3 ray_direction(int r, int c, const ProjectionConfig& sensor) {
  const double el = row_elevation(r, sensor);
  const double az = column_azimuth(c, sensor.cols);
  return {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
}

/// Conservative range-image window around an object: rows [r0, r1], columns c0 + [0, span).
struct Window {
  int r0 = 0, r1 = -1, c0 = 0, span = 0;
};

Window object_window(const SceneObject& obj, const ProjectionConfig& sensor) {
  const Box3& b = obj.box;
  const double radius = 0.5 * std::hypot(b.size.x(), b.size.y()) + 0.05;
  const double dist = std::hypot(b.center.x(), b.center.y());
  const double z_lo = b.center.z() - 0.5 * b.size.z() - 0.05;
  const double z_hi = b.center.z() + 0.5 * b.size.z() + 0.05;
  Window w;
  if (dist <= radius + 1e-3) {
    w.r0 = 0;
    w.r1 = sensor.rows - 1;
    w.c0 = 0;
    w.span = sensor.cols;
    return w;
  }
  const double near = dist - radius, far = dist + radius;
  const double el_hi = z_hi > 0 ? std::atan2(z_hi, near) : std::atan2(z_hi, far);
  const double el_lo = z_lo < 0 ? std::atan2(z_lo, near) : std::atan2(z_lo, far);
  auto row_at = [&](double el) { return (sensor.fov_up - el) / sensor.fov() * sensor.rows - 0.5; };
  w.r0 = std::max(0, static_cast<int>(std::floor(row_at(el_hi))) - 1);
  w.r1 = std::min(sensor.rows - 1, static_cast<int>(std::ceil(row_at(el_lo))) + 1);

  const double az = std::atan2(b.center.y(), b.center.x());
  const double half = std::asin(std::min(1.0, radius / dist));
  auto col_at = [&](double a) { return 0.5 * (1.0 - a / kPi) * sensor.cols - 0.5; };
  const int c_lo = static_cast<int>(std::floor(col_at(az + half))) - 1;
  const int c_hi = static_cast<int>(std::ceil(col_at(az - half))) + 1;
  w.span = std::min(sensor.cols, c_hi - c_lo + 1);
  w.c0 = ((c_lo % sensor.cols) + sensor.cols) % sensor.cols;
  return w;
}

/// Nearest surface of `obj` along the ray through cell `cell`, honoring porosity and jitter.
double cast_object(const SceneObject& obj, const Vec3& dir, std::uint64_t seed, std::size_t object_index,
                   std::size_t cell) {
  double best = kInf;
  for (std::size_t k = 0; k < obj.shapes.size(); ++k) {
    const Shape& s = obj.shapes[k];
    double t = intersect(s, Vec3::Zero(), dir);
    if (!std::isfinite(t)) continue;
    if (s.porosity > 0 || s.jitter > 0) {
      CellRng rng{derive_seed(seed ^ (object_index * 0x9e37ULL + k), cell)};
      if (rng.uniform() < s.porosity) continue;
      t = std::max(1e-3, t + s.jitter * (2.0 * rng.uniform() - 1.0));
    }
    best = std::min(best, t);
  }
  return best;
}

}  // namespace

RenderedScan render_scan(const Scene& scene, const ProjectionConfig& sensor, const RenderOptions& opt,
                         std::uint64_t seed) {
  sensor.validate();
  const int rows = sensor.rows, cols = sensor.cols;
  const std::size_t cells = static_cast<std::size_t>(rows) * cols;
  std::vector<double> depth(cells, kInf);
  std::vector<int> owner(cells, -2);
  std::vector<Vec3> dirs(cells);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
      dirs[i] = ray_direction(r, c, sensor);
      const double nd = scene.ground.normal.dot(dirs[i]);
      if (nd < -1e-12) {
        depth[i] = -scene.ground.d / nd;
        owner[i] = kOwnerGround;
      }
    }
  }
  for (std::size_t k = 0; k < scene.objects.size(); ++k) {
    const Window w = object_window(scene.objects[k], sensor);
    for (int r = w.r0; r <= w.r1; ++r) {
      for (int j = 0; j < w.span; ++j) {
        const int c = (w.c0 + j) % cols;
        const std::size_t i = static_cast<std::size_t>(r) * cols + c;
        const double t = cast_object(scene.objects[k], dirs[i], seed, k, i);
        if (t < depth[i]) {
          depth[i] = t;
          owner[i] = static_cast<int>(k);
        }
      }
    }
  }
  RenderedScan out;
  for (std::size_t i = 0; i < cells; ++i) {
    if (owner[i] == -2 || depth[i] > opt.max_range) continue;
    CellRng rng{derive_seed(seed, i)};
    double t = depth[i];
    if (opt.range_noise > 0) t = std::max(1e-2, t + opt.range_noise * rng.gaussian());
    Vec3 p = t * dirs[i];
    if (opt.z_noise > 0) p.z() += opt.z_noise * rng.gaussian();
    out.points.emplace_back(p.cast<float>());
    out.owner.push_back(owner[i]);
  }
  return out;
}

std::vector<std::uint8_t> ground_labels(const RenderedScan& scan) {
  std::vector<std::uint8_t> out(scan.owner.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = scan.owner[i] == kOwnerGround ? 1 : 0;
  return out;
}

std::vector<Vec3> render_object(const SceneObject& obj, const GroundPlane& ground, const SynthConfig& cfg,
                                std::uint64_t seed) {
  const ProjectionConfig& sensor = cfg.sensor;
  const Window w = object_window(obj, sensor);
  std::vector<Vec3> out;
  for (int r = w.r0; r <= w.r1; ++r) {
    for (int j = 0; j < w.span; ++j) {
      const int c = (w.c0 + j) % sensor.cols;
      const std::size_t i = static_cast<std::size_t>(r) * sensor.cols + c;
      const Vec3 dir = ray_direction(r, c, sensor);
      double t = cast_object(obj, dir, seed, 0, i);
      if (!std::isfinite(t) || t > cfg.render.max_range) continue;
      // The ground hides anything behind it.
      const double nd = ground.normal.dot(dir);
      if (nd < -1e-12 && -ground.d / nd < t) continue;
      CellRng rng{derive_seed(seed, i)};
      if (cfg.render.range_noise > 0) t = std::max(1e-2, t + cfg.render.range_noise * rng.gaussian());
      Vec3 p = t * dir;
      if (cfg.render.z_noise > 0) p.z() += cfg.render.z_noise * rng.gaussian();
      if (ground.distance(p) < cfg.ground_clearance) continue;
      out.push_back(p);
    }
  }
  return out;
}

std::vector<LabeledProposal> synth_dataset(const SynthConfig& cfg, const ProposalConfig& pcfg, std::uint64_t seed,
                                           int n_id, int n_ood) {
  if (n_id < 0 || n_ood < 0) fail(ErrorCode::kInvalidInput, "dataset sizes must be >= 0");
  cfg.sensor.validate();
  pcfg.validate();
  const GroundPlane ground = GroundPlane::flat(cfg.sensor_height);
  const int total = n_id + n_ood;
  std::vector<LabeledProposal> out(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) {
    const std::uint64_t item_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    std::mt19937_64 rng(item_seed);
    const bool is_id = i < n_id;
    LabeledProposal& item = out[static_cast<std::size_t>(i)];
    for (int attempt = 0;; ++attempt) {
      if (attempt > 1000) fail(ErrorCode::kRuntime, "synth_dataset: could not place a visible object");
      const double range = uniform(rng, cfg.min_object_range, cfg.max_object_range);
      const double az = uniform(rng, -kPi, kPi);
      const double yaw = uniform(rng, -kPi, kPi);
      const double x = range * std::cos(az), y = range * std::sin(az);
      SceneObject obj = is_id ? make_id_object(static_cast<ObjectClass>(i % kNumClasses), x, y, yaw, ground, rng)
                              : make_ood_object(static_cast<OodKind>((i - n_id) % kNumOodKinds), x, y, yaw, ground, rng);
      auto pts = render_object(obj, ground, cfg, derive_seed(item_seed, static_cast<std::uint64_t>(attempt) + 1));
      if (static_cast<int>(pts.size()) < cfg.min_points) continue;
      item.proposal = make_proposal(std::move(pts), 0, pcfg, item_seed);
      item.label = obj.label;
      item.kind = obj.kind;
      item.gt_box = obj.box;
      if (is_id) item.targets = encode_box_targets(obj.box, static_cast<ObjectClass>(obj.label), item.proposal);
      break;
    }
  }
  return out;
}

Scene ground_suite_scene(std::uint64_t seed, double sensor_height, double max_tilt, double outlier_fraction) {
  std::mt19937_64 rng(derive_seed(seed, 0x67726f756e64ULL));
  Scene scene;
  const double tilt = max_tilt > 0 ? uniform(rng, 0.0, max_tilt) : 0.0;
  scene.ground = GroundPlane::tilted(sensor_height, tilt, uniform(rng, -kPi, kPi));
  const int n = std::uniform_int_distribution<int>(3, 10)(rng);
  const int n_outliers = static_cast<int>(std::lround(outlier_fraction * n));
  std::vector<std::pair<Vec3, double>> taken;
  for (int k = 0; k < n; ++k) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const double range = uniform(rng, 4.0, 30.0), az = uniform(rng, -kPi, kPi);
      const double x = range * std::cos(az), y = range * std::sin(az);
      SceneObject obj = k < n_outliers ? make_outlier_obstacle(x, y, scene.ground, rng)
                                       : make_obstacle(x, y, scene.ground, rng);
      const double rad = 0.5 * std::hypot(obj.box.size.x(), obj.box.size.y());
      const bool clear = std::none_of(taken.begin(), taken.end(), [&](const auto& t) {
        return (t.first - Vec3(x, y, 0)).norm() < t.second + rad + 0.5;
      });
      if (!clear || range < rad + 1.0) continue;
      taken.emplace_back(Vec3(x, y, 0), rad);
      scene.objects.push_back(std::move(obj));
      break;
    }
  }
  return scene;
}

Scene detection_scene(const SynthConfig& cfg, std::uint64_t seed, int n_id, int n_ood) {
  std::mt19937_64 rng(derive_seed(seed, 0x7363656e65ULL));
  Scene scene;
  scene.ground = GroundPlane::flat(cfg.sensor_height);
  std::vector<std::pair<Vec3, double>> taken;
  const int first_class = std::uniform_int_distribution<int>(0, kNumClasses - 1)(rng);
  const int first_kind = std::uniform_int_distribution<int>(0, kNumOodKinds - 1)(rng);
  for (int k = 0; k < n_id + n_ood; ++k) {
    for (int attempt = 0; attempt < 500; ++attempt) {
      const double range = uniform(rng, cfg.min_object_range, cfg.max_object_range);
      const double az = uniform(rng, -kPi, kPi), yaw = uniform(rng, -kPi, kPi);
      const double x = range * std::cos(az), y = range * std::sin(az);
      SceneObject obj =
          k < n_id ? make_id_object(static_cast<ObjectClass>((first_class + k) % kNumClasses), x, y, yaw, scene.ground, rng)
                   : make_ood_object(static_cast<OodKind>((first_kind + k - n_id) % kNumOodKinds), x, y, yaw,
                                     scene.ground, rng);
      const Vec3 c(obj.box.center.x(), obj.box.center.y(), 0);
      const double rad = 0.5 * std::hypot(obj.box.size.x(), obj.box.size.y());
      const bool clear = std::none_of(taken.begin(), taken.end(), [&](const auto& t) {
        return (t.first - c).norm() < t.second + rad + cfg.cluster_gap;
      });
      if (!clear || c.norm() < rad + 2.0) continue;
      taken.emplace_back(c, rad);
      scene.objects.push_back(std::move(obj));
      break;
    }
  }
  return scene;
}

void write_scene_labels(const std::string& path, const Scene& scene) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path);
  out << std::setprecision(9);
  for (const auto& obj : scene.objects) {
    if (obj.label < 0) continue;
    const Box3& b = obj.box;
    out << class_name(static_cast<ObjectClass>(obj.label)) << ' ' << b.center.x() << ' ' << b.center.y() << ' '
        << b.center.z() << ' ' << b.size.x() << ' ' << b.size.y() << ' ' << b.size.z() << ' ' << b.yaw << '\n';
  }
  if (!out) fail(ErrorCode::kIo, "write failed: " + path);
}

}  // namespace pcrd
