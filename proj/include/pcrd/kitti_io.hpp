#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pcrd/common.hpp"
#include "pcrd/evaluation.hpp"

namespace pcrd {

struct KittiCalib {
  Eigen::Matrix<double, 3, 4> p2 = Eigen::Matrix<double, 3, 4>::Zero();
  Eigen::Matrix3d r0_rect = Eigen::Matrix3d::Identity();
  Eigen::Matrix<double, 3, 4> tr_velo_to_cam = Eigen::Matrix<double, 3, 4>::Zero();

  /// Rectified camera coordinates to LiDAR coordinates.
  Vec3 rect_to_velo(const Vec3& p) const;
};

KittiCalib parse_kitti_calib(const std::string& text);
KittiCalib load_kitti_calib(const std::string& path);

/// One row of a KITTI object label file (camera frame).
struct KittiObject {
  std::string type;
  double truncation = 0;
  int occlusion = 0;
  double alpha = 0;
  double bbox[4] = {0, 0, 0, 0};  // left, top, right, bottom (pixels)
  double h = 0, w = 0, l = 0;
  Vec3 location = Vec3::Zero();  // bottom center, rectified camera frame
  double ry = 0;
  double score = 0;  // optional 16th field
};

/// Throws kInvalidInput naming the line on a malformed row.
std::vector<KittiObject> parse_kitti_labels(const std::string& text);
std::vector<KittiObject> load_kitti_label_file(const std::string& path);

/// LiDAR-frame box: center lifted by h/2 from the bottom point, yaw = -ry - pi/2.
Box3 kitti_to_lidar(const KittiObject& obj, const KittiCalib& calib);

enum class Difficulty { kEasy, kModerate, kHard };
const char* difficulty_name(Difficulty d);
bool parse_difficulty(const std::string& s, Difficulty& out);
bool meets_difficulty(const KittiObject& obj, Difficulty d);

struct KittiFrameGt {
  std::vector<ClassGt> boxes;           // evaluated classes; ignore set when too hard
  std::vector<KittiObject> ignored;     // DontCare and other types
};

KittiFrameGt kitti_ground_truth(const std::vector<KittiObject>& objects, const KittiCalib& calib, Difficulty d,
                                int frame);

/// SemanticKITTI .label: one little-endian uint32 per point, semantic class in the low 16 bits.
std::vector<std::uint32_t> read_semantic_labels(const std::string& path);
void write_semantic_labels(const std::string& path, const std::vector<std::uint32_t>& labels);
/// 1 where the semantic class is road, parking, sidewalk, other-ground, lane marking or terrain.
std::vector<std::uint8_t> semantic_ground_mask(const std::vector<std::uint32_t>& labels);

inline constexpr std::uint32_t kSemanticRoad = 40;
inline constexpr std::uint32_t kSemanticUnlabeled = 0;
inline constexpr std::uint32_t kSemanticCar = 10;

/// Sensor-frame box labels "class x y z l w h yaw", as written by the synthetic generator.
std::vector<std::pair<ObjectClass, Box3>> load_box_labels(const std::string& path);

/// Detection lines "frame class score x y z l w h yaw".
struct DetectionRecord {
  std::string frame;
  ObjectClass cls = ObjectClass::kCar;
  double score = 0;
  Box3 box;
};
std::vector<DetectionRecord> load_detections(const std::string& path);

}  // namespace pcrd
