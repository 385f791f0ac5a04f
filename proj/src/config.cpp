#include "pcrd/config.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>

namespace pcrd {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_angle(double radians) {
  std::ostringstream os;
  os.precision(12);
  os << radians / kDeg;
  return os.str();
}

double parse_double(const std::string& key, const std::string& v) {
  if (v == "inf" || v == "+inf") return std::numeric_limits<double>::infinity();
  if (v == "-inf") return -std::numeric_limits<double>::infinity();
  double out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || std::isnan(out)) {
    fail(ErrorCode::kConfig, "bad number for " + key + ": '" + v + "'");
  }
  return out;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    fail(ErrorCode::kConfig, "bad integer for " + key + ": '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(ErrorCode::kConfig, "bad boolean for " + key + ": '" + v + "'");
}

struct Field {
  std::string key;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const std::string&)> set;
};

template <typename Member>
Field real(std::string key, Member member) {
  return {key, [member](const PipelineConfig& c) { return format_double(member(const_cast<PipelineConfig&>(c))); },
          [member, key](PipelineConfig& c, const std::string& v) { member(c) = parse_double(key, v); }};
}

template <typename Member>
Field angle(std::string key, Member member) {
  return {key, [member](const PipelineConfig& c) { return format_angle(member(const_cast<PipelineConfig&>(c))); },
          [member, key](PipelineConfig& c, const std::string& v) { member(c) = parse_double(key, v) * kDeg; }};
}

template <typename Member>
Field integer(std::string key, Member member) {
  using Int = std::remove_reference_t<decltype(member(std::declval<PipelineConfig&>()))>;
  return {key, [member](const PipelineConfig& c) { return std::to_string(member(const_cast<PipelineConfig&>(c))); },
          [member, key](PipelineConfig& c, const std::string& v) { member(c) = parse_int<Int>(key, v); }};
}

template <typename Member>
Field boolean(std::string key, Member member) {
  return {key, [member](const PipelineConfig& c) { return member(const_cast<PipelineConfig&>(c)) ? "true" : "false"; },
          [member, key](PipelineConfig& c, const std::string& v) { member(c) = parse_bool(key, v); }};
}

template <typename Member>
Field text(std::string key, Member member) {
  return {key, [member](const PipelineConfig& c) { return member(const_cast<PipelineConfig&>(c)); },
          [member](PipelineConfig& c, const std::string& v) { member(c) = v; }};
}

#define PCRD_M(expr) [](PipelineConfig& c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      integer("projection.rows", PCRD_M(projection.rows)),
      integer("projection.cols", PCRD_M(projection.cols)),
      angle("projection.fov_up_deg", PCRD_M(projection.fov_up)),
      angle("projection.fov_down_deg", PCRD_M(projection.fov_down)),
      real("ground.slope_threshold", PCRD_M(ground.slope_threshold)),
      real("ground.horizontal_threshold", PCRD_M(ground.horizontal_threshold)),
      real("ground.p_th", PCRD_M(ground.plane_threshold)),
      integer("ground.sectors", PCRD_M(ground.sectors)),
      integer("ground.ransac_iters", PCRD_M(ground.ransac_iters)),
      real("ground.ransac_inlier_threshold", PCRD_M(ground.ransac_inlier_threshold)),
      integer("ground.min_samples", PCRD_M(ground.min_samples)),
      angle("cluster.theta_deg", PCRD_M(cluster.theta)),
      integer("cluster.window_rows", PCRD_M(cluster.window_rows)),
      integer("cluster.window_cols", PCRD_M(cluster.window_cols)),
      integer("cluster.min_points", PCRD_M(cluster.min_cluster_points)),
      integer("proposal.n_points", PCRD_M(proposal.n_points)),
      real("proposal.max_range", PCRD_M(proposal.max_range)),
      real("proposal.voxel_azimuth_deg", PCRD_M(proposal.voxel_azimuth_deg)),
      real("proposal.voxel_elevation_deg", PCRD_M(proposal.voxel_elevation_deg)),
      real("proposal.voxel_range", PCRD_M(proposal.voxel_range)),
      real("energy.temperature", PCRD_M(energy.temperature)),
      real("energy.gamma_c", PCRD_M(energy.gamma_cls)),
      real("energy.gamma_b", PCRD_M(energy.gamma_box)),
      real("train.lr", PCRD_M(train.lr)),
      real("train.beta1", PCRD_M(train.beta1)),
      real("train.beta2", PCRD_M(train.beta2)),
      real("train.adam_eps", PCRD_M(train.adam_eps)),
      integer("train.epochs", PCRD_M(train.epochs)),
      integer("train.batch_size", PCRD_M(train.batch_size)),
      real("train.lambda", PCRD_M(train.lambda)),
      real("train.gamma_corner", PCRD_M(train.gamma_corner)),
      real("train.m_id", PCRD_M(train.margin_id)),
      real("train.m_ood", PCRD_M(train.margin_ood)),
      real("train.temperature", PCRD_M(train.temperature)),
      boolean("train.use_pvle", PCRD_M(train.use_pvle)),
      integer("synth.n_id", PCRD_M(synth_id)),
      integer("synth.n_ood", PCRD_M(synth_ood)),
      real("synth.sensor_height", PCRD_M(synth.sensor_height)),
      real("synth.range_noise", PCRD_M(synth.render.range_noise)),
      real("synth.min_range", PCRD_M(synth.min_object_range)),
      real("synth.max_range", PCRD_M(synth.max_object_range)),
      real("synth.cluster_gap", PCRD_M(synth.cluster_gap)),
      text("weights.classifier", PCRD_M(classifier_weights)),
      text("weights.box", PCRD_M(box_weights)),
      integer("seed", PCRD_M(seed)),
  };
  return f;
}

#undef PCRD_M

const Field& find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  fail(ErrorCode::kConfig, "unknown config key '" + key + "'");
}

}  // namespace

void PipelineConfig::validate() const {
  projection.validate();
  ground.validate(projection);
  cluster.validate();
  proposal.validate();
  if (!(energy.temperature > 0)) fail(ErrorCode::kConfig, "energy.temperature must be > 0");
  train.validate();
  if (synth_id < 1 || synth_ood < 1) fail(ErrorCode::kConfig, "synth.n_id and synth.n_ood must be >= 1");
  if (!(synth.min_object_range > 0) || synth.max_object_range < synth.min_object_range) {
    fail(ErrorCode::kConfig, "synth ranges must satisfy 0 < min_range <= max_range");
  }
}

void PipelineConfig::check_weight_files() const {
  for (const auto* path : {&classifier_weights, &box_weights}) {
    if (path->empty()) fail(ErrorCode::kConfig, "no weight file configured (weights.classifier / weights.box)");
    std::ifstream in(*path, std::ios::binary);
    if (!in) fail(ErrorCode::kConfig, "cannot open weight file " + *path);
  }
}

void PipelineConfig::set(const std::string& key, const std::string& value) { find_field(key).set(*this, value); }

std::string PipelineConfig::get(const std::string& key) const { return find_field(key).get(*this); }

const std::vector<std::string>& PipelineConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
  }();
  return k;
}

PipelineConfig PipelineConfig::parse(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorCode::kConfig, "line " + std::to_string(line_no) + ": expected key = value");
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      fail(ErrorCode::kConfig, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kConfig, "cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  PipelineConfig cfg;
  try {
    cfg = parse(ss.str());
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, path + ": " + e.what());
  }
  const auto dir = std::filesystem::path(path).parent_path();
  for (auto* p : {&cfg.classifier_weights, &cfg.box_weights}) {
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (dir / *p).lexically_normal().string();
  }
  return cfg;
}

std::string PipelineConfig::serialize() const {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(*this) + "\n";
  return out;
}

void PipelineConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path);
  out << serialize();
  if (!out) fail(ErrorCode::kIo, "write failed: " + path);
}

std::uint64_t config_hash(const PipelineConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : cfg.serialize()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace pcrd
