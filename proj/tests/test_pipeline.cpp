#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "doctest.h"
#include "pcrd/commands.hpp"
#include "pcrd/config.hpp"
#include "pcrd/kitti_io.hpp"
#include "pcrd/pipeline.hpp"
#include "pcrd/synth.hpp"

using namespace pcrd;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& f) const { return (path / f).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Weights that call every proposal a confident pedestrian with a confident box.
Detector pedestrian_detector(PipelineConfig cfg) {
  ClassifierParams<double> cls;
  init_params(cls, 1);
  cls.for_each([](const std::string&, auto& l) { l.w.setZero(); });
  cls.fc2.b << 0, 30, 0;
  BoxParams<double> box;
  init_params(box, 2);
  box.for_each([](const std::string&, auto& l) { l.w.setZero(); });
  box.fc2.b(3 + kHeadingBins / 2) = 30;
  box.fc2.b(3 + 2 * kHeadingBins + 1) = 30;
  return Detector(cfg, cls, box);
}

PointList one_pedestrian_scan(const PipelineConfig& cfg) {
  Scene scene;
  scene.ground = GroundPlane::flat(1.73);
  std::mt19937_64 rng(3);
  scene.objects.push_back(make_id_object(ObjectClass::kPedestrian, 9, 3, 0.4, scene.ground, rng));
  return render_scan(scene, cfg.projection, RenderOptions{}, 5).points;
}

const char* kCalib =
    "P0: 1 0 0 0 0 1 0 0 0 0 1 0\n"
    "P2: 700 0 600 45 0 700 170 0 0 0 1 0.003\n"
    "R0_rect: 1 0 0 0 1 0 0 0 1\n"
    "Tr_velo_to_cam: 0 -1 0 0 0 0 -1 0 1 0 0 0\n"
    "Tr_imu_to_velo: 1 0 0 0 0 1 0 0 0 0 1 0\n";

}  // namespace

TEST_CASE("config text round trip") {
  PipelineConfig cfg;
  const auto text = cfg.serialize();
  CHECK(PipelineConfig::parse(text).serialize() == text);
  CHECK(text.find("projection.fov_up_deg = 3\n") != std::string::npos);

  cfg.set("cluster.theta_deg", "12.5");
  cfg.set("energy.gamma_c", "-11.25");
  cfg.set("train.use_pvle", "false");
  cfg.set("seed", "99");
  const auto again = PipelineConfig::parse(cfg.serialize());
  CHECK(again.cluster.theta == doctest::Approx(12.5 * std::numbers::pi / 180));
  CHECK(again.energy.gamma_cls == -11.25);
  CHECK_FALSE(again.train.use_pvle);
  CHECK(again.seed == 99);
  CHECK(again.serialize() == cfg.serialize());
  CHECK(config_hash(again) == config_hash(cfg));
  CHECK(config_hash(again) != config_hash(PipelineConfig{}));
  for (const auto& k : PipelineConfig::keys()) CHECK(again.get(k) == cfg.get(k));
}

TEST_CASE("config errors") {
  auto code = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kRuntime;
  };
  PipelineConfig cfg;
  CHECK(code([&] { cfg.set("no.such.key", "1"); }) == ErrorCode::kConfig);
  CHECK(code([&] { cfg.set("projection.rows", "sixty"); }) == ErrorCode::kConfig);
  CHECK(code([&] { cfg.set("train.use_pvle", "maybe"); }) == ErrorCode::kConfig);
  CHECK(code([&] { PipelineConfig::parse("projection.rows 64\n"); }) == ErrorCode::kConfig);
  CHECK(code([&] { PipelineConfig::parse("ground.sectors = 7\n"); }) == ErrorCode::kConfig);
  CHECK(code([&] { PipelineConfig::load("/nonexistent/pcrd.cfg"); }) != ErrorCode::kRuntime);
  const auto p = PipelineConfig::parse("# comment\n\nprojection.cols = 1024  # trailing\nprojection.cols = 512\n");
  CHECK(p.projection.cols == 512);
  CHECK(code([&] { p.check_weight_files(); }) == ErrorCode::kConfig);
}

TEST_CASE("config file resolves weights next to it") {
  TempDir dir("pcrd_cfg_test");
  fs::create_directories(dir.path / "sub");
  std::ofstream(dir / "sub/run.cfg") << "weights.classifier = c.pcrd\nweights.box = /abs/b.pcrd\n";
  const auto cfg = PipelineConfig::load(dir / "sub/run.cfg");
  CHECK(fs::path(cfg.classifier_weights) == dir.path / "sub" / "c.pcrd");
  CHECK(cfg.box_weights == "/abs/b.pcrd");
  PipelineConfig plain;
  plain.save(dir / "plain.cfg");
  CHECK(slurp(dir / "plain.cfg") == plain.serialize());
}

TEST_CASE("kitti calibration and labels") {
  const auto calib = parse_kitti_calib(kCalib);
  const Vec3 v = calib.rect_to_velo(Vec3(1, 1.73, 10));
  CHECK(v.isApprox(Vec3(10, -1, -1.73)));
  CHECK_THROWS_AS(parse_kitti_calib("P2: 1 2 3\n"), Error);
  CHECK_THROWS_AS(parse_kitti_calib("P2: 1 0 0 0 0 1 0 0 0 0 1 0\n"), Error);

  const std::string labels =
      "Pedestrian 0.00 0 -0.20 712.40 143.00 810.73 307.92 1.73 0.60 0.80 1.00 1.73 10.00 0.00\n"
      "DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10\n"
      "Car 0.50 2 1.85 387.63 181.54 423.81 203.12 1.67 1.87 3.69 -16.53 2.39 58.49 1.57\n"
      "Van 0.00 0 0 0 100 50 200 2.2 1.9 4.5 5 1.7 20 0\n";
  const auto objs = parse_kitti_labels(labels);
  REQUIRE(objs.size() == 4);
  const auto box = kitti_to_lidar(objs[0], calib);
  CHECK(box.size.isApprox(Vec3(0.8, 0.6, 1.73)));
  CHECK(box.center.isApprox(Vec3(10, -1, -1.73 + 0.865)));
  CHECK(box.yaw == doctest::Approx(-std::numbers::pi / 2));

  const auto gt = kitti_ground_truth(objs, calib, Difficulty::kModerate, 3);
  CHECK(gt.ignored.size() == 1);
  CHECK(gt.ignored[0].type == "DontCare");
  REQUIRE(gt.boxes.size() == 3);
  CHECK(gt.boxes[0].cls == ObjectClass::kPedestrian);
  CHECK_FALSE(gt.boxes[0].gt.ignore);
  CHECK(gt.boxes[0].gt.frame == 3);
  CHECK(gt.boxes[1].gt.ignore);  // truncated and occluded beyond moderate
  CHECK(gt.boxes[2].gt.ignore);  // vans are never scored

  CHECK(parse_kitti_labels("").empty());
  CHECK(parse_kitti_labels("\n  \n").empty());
  CHECK_THROWS_AS(parse_kitti_labels("Car 0 0 0 1 2 3\n"), Error);
  CHECK_THROWS_AS(parse_kitti_labels("Car 0 0 0 1 2 3 4 5 6 7 8 9 x 11\n"), Error);
  Difficulty d;
  CHECK(parse_difficulty("hard", d));
  CHECK(d == Difficulty::kHard);
  CHECK_FALSE(parse_difficulty("extreme", d));
}

TEST_CASE("semantic labels and text formats") {
  TempDir dir("pcrd_io_test");
  const std::vector<std::uint32_t> labels{40, 10 | (7u << 16), 0, 72, 48 | (1u << 16), 50};
  write_semantic_labels(dir / "a.label", labels);
  CHECK(fs::file_size(dir / "a.label") == 24);
  CHECK(read_semantic_labels(dir / "a.label") == labels);
  CHECK(semantic_ground_mask(labels) == std::vector<std::uint8_t>{1, 0, 0, 1, 1, 0});

  std::ofstream(dir / "b.txt") << "Car 10 0 -1 3.9 1.6 1.56 0.5\nCyclist 5 5 -1 1.76 0.6 1.73 -1\n";
  const auto boxes = load_box_labels(dir / "b.txt");
  REQUIRE(boxes.size() == 2);
  CHECK(boxes[1].first == ObjectClass::kCyclist);
  CHECK(boxes[0].second.yaw == 0.5);
  std::ofstream(dir / "c.txt") << "Truck 1 2 3 4 5 6 7\n";
  CHECK_THROWS_AS(load_box_labels(dir / "c.txt"), Error);

  std::ofstream(dir / "d.txt") << "frame_000001 Pedestrian 20.5 1 2 3 0.8 0.6 1.7 0.1\n";
  const auto dets = load_detections(dir / "d.txt");
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].frame == "frame_000001");
  CHECK(dets[0].score == 20.5);
}

TEST_CASE("empty scan") {
  const auto det = random_detector(PipelineConfig{});
  const auto res = detect_scan(det, PointList{});
  CHECK(res.detections.empty());
  CHECK(res.counts.points == 0);
  CHECK(res.counts.valid == 0);
  CHECK(res.counts.proposals == 0);
  CHECK(res.counts.gate2 == 0);
}

TEST_CASE("one pedestrian on flat ground") {
  PipelineConfig cfg;
  const auto det = pedestrian_detector(cfg);
  ScanArtifacts art;
  const auto res = detect_scan(det, one_pedestrian_scan(cfg), &art);
  CHECK(res.counts.proposals == 1);
  REQUIRE(res.detections.size() == 1);
  const auto& d = res.detections[0];
  CHECK(d.cls == ObjectClass::kPedestrian);
  CHECK(d.box.size.isApprox(size_template(1)));
  CHECK((d.box.center.head<2>() - Vec3(9, 3, 0).head<2>()).norm() < 0.5);
  CHECK(d.energy_cls < cfg.energy.gamma_cls);
  CHECK(art.energy_cls.size() == 1);
  const auto line = detection_line("f0", d);
  CHECK(line.rfind("f0 Pedestrian ", 0) == 0);

  TempDir dir("pcrd_ply_test");
  write_ply(dir / "scan.ply", art, res.detections);
  const auto ply = slurp(dir / "scan.ply");
  CHECK(ply.rfind("ply\nformat ascii 1.0\nelement vertex " + std::to_string(art.cloud.valid_count()), 0) == 0);
  CHECK(ply.find(" 255 0 0\n") != std::string::npos);
}

TEST_CASE("count chain and gate monotonicity") {
  PipelineConfig cfg;
  auto det = random_detector(cfg);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto frame = synth_frame(cfg, seed, 8, 6);
    ScanArtifacts art;
    det.gate_classifier = det.gate_box = false;
    (void)detect_scan(det, frame.points, &art);
    REQUIRE(art.energy_cls.size() > 2);
    auto sorted = art.energy_cls;
    std::sort(sorted.begin(), sorted.end());
    det.config().energy.gamma_cls = sorted[sorted.size() / 2] + 2.5;
    det.config().energy.gamma_box = 0;
    det.gate_classifier = det.gate_box = true;

    const auto full = detect_scan(det, frame.points);
    const auto& c = full.counts;
    CHECK(c.gate2 == full.detections.size());
    CHECK(c.gate2 <= c.gate1);
    CHECK(c.gate1 <= c.proposals);
    CHECK(c.proposals <= c.clusters);
    CHECK(c.ground <= c.valid);
    CHECK(c.valid <= c.points);
    for (int k = 0; k < kNumStages; ++k) CHECK(full.times.stage_ms[k] >= 0);
    double sum = 0;
    for (double t : full.times.stage_ms) sum += t;
    CHECK(sum <= full.times.total_ms + 1e-9);

    auto strict = det;
    strict.config().energy.gamma_cls -= 5;
    const auto fewer = detect_scan(strict, frame.points);
    CHECK(fewer.detections.size() <= full.detections.size());
    for (const auto& d : fewer.detections) {
      CHECK(std::any_of(full.detections.begin(), full.detections.end(),
                        [&](const Detection& e) { return e.cluster_id == d.cluster_id; }));
    }
  }
}

TEST_CASE("batch detection matches single scans") {
  PipelineConfig cfg;
  auto det = random_detector(cfg);
  det.gate_classifier = det.gate_box = false;
  std::vector<PointList> scans;
  for (std::uint64_t s = 0; s < 4; ++s) scans.push_back(synth_frame(cfg, s, 4, 3).points);
  const auto batch = detect_batch(det, scans, 3);
  REQUIRE(batch.size() == 4);
  for (std::size_t i = 0; i < scans.size(); ++i) {
    const auto one = detect_scan(det, scans[i]);
    REQUIRE(one.detections.size() == batch[i].detections.size());
    for (std::size_t k = 0; k < one.detections.size(); ++k) {
      CHECK(one.detections[k].box.center == batch[i].detections[k].box.center);
    }
  }
  const auto runs = benchmark(det, std::span(scans.data(), 2), 3);
  CHECK(runs.size() == 6);
}

TEST_CASE("synthetic dataset files") {
  TempDir a("pcrd_synth_a"), b("pcrd_synth_b");
  PipelineConfig cfg;
  cfg.projection.cols = 512;
  const auto kv = synth_write(cfg, 7, {2, 3, 2}, a.path.string());
  synth_write(cfg, 7, {2, 3, 2}, b.path.string());
  for (const char* f : {"frame_000000.bin", "frame_000001.label", "frame_000001.txt", "manifest.kv"}) {
    REQUIRE(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  const auto bins = expand_inputs(a.path.string());
  CHECK(bins.size() == 2);
  CHECK(expand_inputs(a / "frame_*1.bin").size() == 1);
  CHECK(expand_inputs(a / "frame_000000.bin").size() == 1);
  CHECK_THROWS_AS(expand_inputs(a / "nothing_*.bin"), Error);
  CHECK(read_kitti_bin(bins[0]).size() == read_semantic_labels(a / "frame_000000.label").size());

  const auto perfect = eval_ground(cfg, a.path.string(), a.path.string());
  auto value = [](const KeyValues& kv, const std::string& k) {
    for (const auto& [key, v] : kv)
      if (key == k) return v;
    return std::string("missing");
  };
  CHECK(value(perfect, "iou") == "1");
  CHECK(value(perfect, "precision") == "1");
  const auto piped = eval_ground(cfg, a.path.string());
  CHECK(std::stod(value(piped, "iou")) > 0.9);

  // ground-truth boxes as detections
  std::ofstream dets(b / "dets.txt");
  for (int i = 0; i < 2; ++i) {
    const std::string stem = i ? "frame_000001" : "frame_000000";
    for (const auto& [cls, box] : load_box_labels(a / (stem + ".txt"))) {
      dets << stem << ' ' << class_name(cls) << " 1 " << box.center.x() << ' ' << box.center.y() << ' '
           << box.center.z() << ' ' << box.size.x() << ' ' << box.size.y() << ' ' << box.size.z() << ' ' << box.yaw
           << '\n';
    }
  }
  dets.close();
  EvalDetectOptions opt;
  opt.detections = b / "dets.txt";
  opt.labels = a.path.string();
  opt.csv_out = b / "ap.csv";
  const auto rep = eval_detect(opt);
  CHECK(value(rep, "map40") == "1");
  CHECK(fs::exists(b / "ap.csv"));
}
