#include "pcrd/kitti_io.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <Eigen/LU>

namespace pcrd {

namespace {

std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <int R, int C>
bool read_matrix(std::istringstream& in, Eigen::Matrix<double, R, C>& m) {
  for (int r = 0; r < R; ++r) {
    for (int c = 0; c < C; ++c) {
      if (!(in >> m(r, c))) return false;
    }
  }
  return true;
}

bool blank(const std::string& line) { return line.find_first_not_of(" \t\r") == std::string::npos; }

}  // namespace

Vec3 KittiCalib::rect_to_velo(const Vec3& p) const {
  const Vec3 cam = r0_rect.inverse() * p;
  const Eigen::Matrix3d rot = tr_velo_to_cam.leftCols<3>();
  return rot.transpose() * (cam - tr_velo_to_cam.col(3));
}

KittiCalib parse_kitti_calib(const std::string& text) {
  KittiCalib calib;
  bool have_p2 = false, have_r0 = false, have_tr = false;
  std::istringstream lines(text);
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (blank(line)) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string key = line.substr(0, colon);
    std::istringstream in(line.substr(colon + 1));
    bool ok = true;
    if (key == "P2") {
      ok = read_matrix(in, calib.p2);
      have_p2 = true;
    } else if (key == "R0_rect" || key == "R_rect") {
      ok = read_matrix(in, calib.r0_rect);
      have_r0 = true;
    } else if (key == "Tr_velo_to_cam" || key == "Tr_velo_cam") {
      ok = read_matrix(in, calib.tr_velo_to_cam);
      have_tr = true;
    }
    if (!ok) fail(ErrorCode::kInvalidInput, "calib line " + std::to_string(line_no) + ": bad " + key);
  }
  if (!have_p2 || !have_r0 || !have_tr) {
    fail(ErrorCode::kInvalidInput, "calib: P2, R0_rect and Tr_velo_to_cam are required");
  }
  return calib;
}

KittiCalib load_kitti_calib(const std::string& path) {
  try {
    return parse_kitti_calib(read_all(path));
  } catch (const Error& e) {
    fail(e.code(), path + ": " + e.what());
  }
}

std::vector<KittiObject> parse_kitti_labels(const std::string& text) {
  std::vector<KittiObject> out;
  std::istringstream lines(text);
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (blank(line)) continue;
    std::istringstream in(line);
    std::vector<std::string> tok;
    for (std::string t; in >> t;) tok.push_back(t);
    if (tok.size() != 15 && tok.size() != 16) {
      fail(ErrorCode::kInvalidInput,
           "label line " + std::to_string(line_no) + ": expected 15 fields, got " + std::to_string(tok.size()));
    }
    KittiObject o;
    o.type = tok[0];
    try {
      std::size_t used = 0;
      auto num = [&](std::size_t i) {
        const double v = std::stod(tok[i], &used);
        if (used != tok[i].size() || !std::isfinite(v)) throw std::invalid_argument(tok[i]);
        return v;
      };
      o.truncation = num(1);
      o.occlusion = static_cast<int>(num(2));
      o.alpha = num(3);
      for (int k = 0; k < 4; ++k) o.bbox[k] = num(4 + static_cast<std::size_t>(k));
      o.h = num(8);
      o.w = num(9);
      o.l = num(10);
      o.location = Vec3(num(11), num(12), num(13));
      o.ry = num(14);
      if (tok.size() == 16) o.score = num(15);
    } catch (const std::exception&) {
      fail(ErrorCode::kInvalidInput, "label line " + std::to_string(line_no) + ": non-numeric field");
    }
    out.push_back(o);
  }
  return out;
}

std::vector<KittiObject> load_kitti_label_file(const std::string& path) {
  try {
    return parse_kitti_labels(read_all(path));
  } catch (const Error& e) {
    fail(e.code(), path + ": " + e.what());
  }
}

Box3 kitti_to_lidar(const KittiObject& obj, const KittiCalib& calib) {
  Box3 b;
  const Vec3 bottom = calib.rect_to_velo(obj.location);
  b.center = bottom + Vec3(0, 0, obj.h / 2);
  b.size = Vec3(obj.l, obj.w, obj.h);
  b.yaw = wrap_angle(-obj.ry - std::numbers::pi / 2);
  return b;
}

const char* difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::kEasy: return "easy";
    case Difficulty::kModerate: return "moderate";
    case Difficulty::kHard: return "hard";
  }
  return "?";
}

bool parse_difficulty(const std::string& s, Difficulty& out) {
  if (s == "easy") out = Difficulty::kEasy;
  else if (s == "moderate") out = Difficulty::kModerate;
  else if (s == "hard") out = Difficulty::kHard;
  else return false;
  return true;
}

bool meets_difficulty(const KittiObject& obj, Difficulty d) {
  static constexpr double kMinHeight[] = {40, 25, 25};
  static constexpr int kMaxOcclusion[] = {0, 1, 2};
  static constexpr double kMaxTruncation[] = {0.15, 0.3, 0.5};
  const auto i = static_cast<int>(d);
  return obj.bbox[3] - obj.bbox[1] >= kMinHeight[i] && obj.occlusion <= kMaxOcclusion[i] &&
         obj.truncation <= kMaxTruncation[i];
}

KittiFrameGt kitti_ground_truth(const std::vector<KittiObject>& objects, const KittiCalib& calib, Difficulty d,
                                int frame) {
  KittiFrameGt out;
  for (const auto& o : objects) {
    ObjectClass cls = ObjectClass::kCar;
    // Similar classes are matched but never scored.
    const bool neighbour = o.type == "Van" || o.type == "Person_sitting";
    if (o.type == "Person_sitting") cls = ObjectClass::kPedestrian;
    if (!neighbour && !parse_class_name(o.type, cls)) {
      out.ignored.push_back(o);
      continue;
    }
    ClassGt g;
    g.cls = cls;
    g.gt.box = kitti_to_lidar(o, calib);
    g.gt.frame = frame;
    g.gt.ignore = neighbour || !meets_difficulty(o, d);
    out.boxes.push_back(g);
  }
  return out;
}

std::vector<std::uint32_t> read_semantic_labels(const std::string& path) {
  const std::string bytes = read_all(path);
  if (bytes.size() % 4 != 0) fail(ErrorCode::kInvalidInput, path + ": size is not a multiple of 4");
  std::vector<std::uint32_t> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto* b = reinterpret_cast<const unsigned char*>(bytes.data() + 4 * i);
    out[i] = static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
             static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
  }
  return out;
}

void write_semantic_labels(const std::string& path, const std::vector<std::uint32_t>& labels) {
  std::string bytes(labels.size() * 4, '\0');
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (int k = 0; k < 4; ++k) bytes[4 * i + static_cast<std::size_t>(k)] = static_cast<char>((labels[i] >> (8 * k)) & 0xFF);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "write failed: " + path);
}

std::vector<std::uint8_t> semantic_ground_mask(const std::vector<std::uint32_t>& labels) {
  std::vector<std::uint8_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    switch (labels[i] & 0xFFFFu) {
      case 40: case 44: case 48: case 49: case 60: case 72: out[i] = 1; break;
      default: out[i] = 0;
    }
  }
  return out;
}

std::vector<std::pair<ObjectClass, Box3>> load_box_labels(const std::string& path) {
  std::istringstream lines(read_all(path));
  std::vector<std::pair<ObjectClass, Box3>> out;
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (blank(line)) continue;
    std::istringstream in(line);
    std::string name;
    Box3 b;
    ObjectClass cls;
    std::string extra;
    if (!(in >> name >> b.center.x() >> b.center.y() >> b.center.z() >> b.size.x() >> b.size.y() >> b.size.z() >>
          b.yaw) ||
        (in >> extra) || !parse_class_name(name, cls)) {
      fail(ErrorCode::kInvalidInput, path + " line " + std::to_string(line_no) + ": expected 'class x y z l w h yaw'");
    }
    out.emplace_back(cls, b);
  }
  return out;
}

std::vector<DetectionRecord> load_detections(const std::string& path) {
  std::istringstream lines(read_all(path));
  std::vector<DetectionRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (blank(line)) continue;
    std::istringstream in(line);
    DetectionRecord d;
    std::string name, extra;
    Box3& b = d.box;
    if (!(in >> d.frame >> name >> d.score >> b.center.x() >> b.center.y() >> b.center.z() >> b.size.x() >>
          b.size.y() >> b.size.z() >> b.yaw) ||
        (in >> extra) || !parse_class_name(name, d.cls)) {
      fail(ErrorCode::kInvalidInput, path + " line " + std::to_string(line_no) + ": malformed detection");
    }
    out.push_back(d);
  }
  return out;
}

}  // namespace pcrd
