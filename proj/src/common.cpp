#include "pcrd/common.hpp"

#include <cmath>
#include <numbers>

namespace pcrd {

const char* class_name(ObjectClass c) {
  switch (c) {
    case ObjectClass::kCar:
      return "Car";
    case ObjectClass::kPedestrian:
      return "Pedestrian";
    case ObjectClass::kCyclist:
      return "Cyclist";
  }
  return "Unknown";
}

bool parse_class_name(const std::string& s, ObjectClass& out) {
  if (s == "Car") {
    out = ObjectClass::kCar;
  } else if (s == "Pedestrian") {
    out = ObjectClass::kPedestrian;
  } else if (s == "Cyclist") {
    out = ObjectClass::kCyclist;
  } else {
    return false;
  }
  return true;
}

double wrap_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double w = std::fmod(a + std::numbers::pi, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  w -= std::numbers::pi;
  // fmod can land exactly on +pi after the shift for inputs just below -pi.
  if (w >= std::numbers::pi) w -= kTwoPi;
  return w;
}

std::array<Vec3, 8> box_corners(const Vec3& center, const Vec3& size, double yaw) {
  static constexpr double kSx[4] = {1, 1, -1, -1};
  static constexpr double kSy[4] = {1, -1, -1, 1};
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  std::array<Vec3, 8> out;
  for (int k = 0; k < 8; ++k) {
    const double lx = 0.5 * size.x() * kSx[k & 3];
    const double ly = 0.5 * size.y() * kSy[k & 3];
    const double lz = (k < 4 ? -0.5 : 0.5) * size.z();
    out[k] = center + Vec3(c * lx - s * ly, s * lx + c * ly, lz);
  }
  return out;
}

std::array<Vec3, 8> box_corners(const Box3& b) { return box_corners(b.center, b.size, b.yaw); }

}  // namespace pcrd
