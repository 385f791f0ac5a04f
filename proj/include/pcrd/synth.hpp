#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "pcrd/common.hpp"
#include "pcrd/projection.hpp"
#include "pcrd/proposals.hpp"
#include "pcrd/training.hpp"

namespace pcrd {

/// splitmix64 step; also used to derive independent per-item seeds.
std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// Ray-castable primitive. `half` holds half extents (box), semi-axes plus half height
/// (elliptic cylinder) or semi-axes (ellipsoid), in the shape's yawed frame.
struct Shape {
  enum class Kind { kBox, kCylinder, kEllipsoid };
  Kind kind = Kind::kBox;
  Vec3 center = Vec3::Zero();
  Vec3 half = Vec3::Constant(0.5);
  double yaw = 0.0;
  double porosity = 0.0;  // chance a ray passes through (foliage)
  double jitter = 0.0;    // uniform depth jitter along the ray, meters
};

/// Entry distance along a unit ray, +inf on a miss.
double intersect(const Shape& s, const Vec3& origin, const Vec3& dir);

/// n . p + d = 0 with unit normal pointing up.
struct GroundPlane {
  Vec3 normal = Vec3::UnitZ();
  double d = 1.73;

  static GroundPlane flat(double sensor_height) { return {Vec3::UnitZ(), sensor_height}; }
  /// Plane through (0, 0, -sensor_height) tilted by `tilt` radians towards azimuth `direction`.
  static GroundPlane tilted(double sensor_height, double tilt, double direction);
  double height_at(double x, double y) const;
  double distance(const Vec3& p) const { return normal.dot(p) + d; }
};

enum class OodKind { kWall, kPole, kBush, kBlob, kTree };
inline constexpr int kNumOodKinds = 5;
const char* ood_kind_name(OodKind k);

struct SceneObject {
  std::vector<Shape> shapes;
  Box3 box;        // enclosing box; the ground-truth box for ID objects
  int label = -1;  // ObjectClass index, -1 for clutter
  std::string kind;
};

/// Object footprint centered at (x, y) standing on `ground`.
SceneObject make_id_object(ObjectClass cls, double x, double y, double yaw, const GroundPlane& ground,
                           std::mt19937_64& rng);
SceneObject make_ood_object(OodKind kind, double x, double y, double yaw, const GroundPlane& ground,
                            std::mt19937_64& rng);
/// Generic box or cylinder obstacle used by the ground-segmentation suites.
SceneObject make_obstacle(double x, double y, const GroundPlane& ground, std::mt19937_64& rng);
/// Overhanging or low-lying clutter used as outlier obstacles.
SceneObject make_outlier_obstacle(double x, double y, const GroundPlane& ground, std::mt19937_64& rng);

struct Scene {
  GroundPlane ground;
  std::vector<SceneObject> objects;
};

struct RenderOptions {
  double max_range = 100.0;
  double range_noise = 0.01;  // Gaussian, along the ray
  double z_noise = 0.0;       // Gaussian, added to z
};

inline constexpr int kOwnerGround = -1;

/// One return per cell that hits something, in row-major cell order.
struct RenderedScan {
  PointList points;
  std::vector<int> owner;  // object index, or kOwnerGround
};

/// Casts one ray through the center of every range-image cell.
RenderedScan render_scan(const Scene& scene, const ProjectionConfig& sensor, const RenderOptions& opt,
                         std::uint64_t seed);

/// Per-point ground labels (1 = ground) of a rendered scan.
std::vector<std::uint8_t> ground_labels(const RenderedScan& scan);

struct SynthConfig {
  ProjectionConfig sensor;
  double sensor_height = 1.73;
  RenderOptions render;
  double min_object_range = 5.0;
  double max_object_range = 40.0;
  double ground_clearance = 0.2;  // returns this close to the ground are treated as ground
  int min_points = 10;
  double cluster_gap = 2.0;  // minimum free space between scene objects, meters
};

/// Returns of a single object, ray cast only inside its angular window, with
/// near-ground returns removed. No occlusion by other objects.
std::vector<Vec3> render_object(const SceneObject& obj, const GroundPlane& ground, const SynthConfig& cfg,
                                std::uint64_t seed);

/// Labeled proposals: ID items cycle car, pedestrian, cyclist; OOD items cycle the
/// clutter kinds. Item i draws everything from derive_seed(seed, i).
std::vector<LabeledProposal> synth_dataset(const SynthConfig& cfg, const ProposalConfig& pcfg, std::uint64_t seed,
                                           int n_id, int n_ood);

/// Flat ground (or tilted up to `max_tilt`) with 3 to 10 box/cylinder obstacles;
/// `outlier_fraction` of the obstacles are drawn from the outlier catalogue.
Scene ground_suite_scene(std::uint64_t seed, double sensor_height, double max_tilt = 0.0,
                         double outlier_fraction = 0.0);

/// Flat-world street scene with ID objects and clutter separated by `cfg.cluster_gap`.
Scene detection_scene(const SynthConfig& cfg, std::uint64_t seed, int n_id, int n_ood);

/// Writes "class x y z l w h yaw" lines (sensor frame) for the scene's ID objects.
void write_scene_labels(const std::string& path, const Scene& scene);

}  // namespace pcrd
