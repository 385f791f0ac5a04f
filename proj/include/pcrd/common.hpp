#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace pcrd {

enum class ErrorCode : int {
  kInvalidInput = 1,
  kDomain = 2,
  kConfig = 3,
  kIo = 4,
  kRuntime = 5,
};

/// Single exception type for the library; the C API maps `code()` to status values.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

using Vec3 = Eigen::Vector3d;

/// Dense row-major H x W image.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  const std::vector<T>& data() const noexcept { return data_; }
  std::vector<T>& data() noexcept { return data_; }

  bool operator==(const Grid&) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

// std::vector<bool> has no contiguous storage; masks use bytes.
using Mask = Grid<std::uint8_t>;

enum class ObjectClass : int { kCar = 0, kPedestrian = 1, kCyclist = 2 };
inline constexpr int kNumClasses = 3;

const char* class_name(ObjectClass c);
/// Accepts KITTI spellings ("Car", "Pedestrian", "Cyclist"); returns false otherwise.
bool parse_class_name(const std::string& s, ObjectClass& out);

/// Oriented 3D box. `center` is the geometric center; `size` is (length along heading,
/// width, height); `yaw` rotates about +z, counter-clockwise from +x.
struct Box3 {
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();
  double yaw = 0.0;
};

/// Wraps an angle into [-pi, pi).
double wrap_angle(double a);

/// Corners in a fixed order: k = 0..3 bottom, 4..7 top, each ring walking
/// (+l,+w), (+l,-w), (-l,-w), (-l,+w) in the box frame. Rotating the box by pi
/// maps corner k onto corner k ^ 2.
std::array<Vec3, 8> box_corners(const Box3& b);
std::array<Vec3, 8> box_corners(const Vec3& center, const Vec3& size, double yaw);

}  // namespace pcrd
