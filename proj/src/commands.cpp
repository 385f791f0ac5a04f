#include "pcrd/commands.hpp"

#include <glob.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

#include "pcrd/kitti_io.hpp"
#include "pcrd/synth.hpp"

namespace fs = std::filesystem;

namespace pcrd {

namespace {

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

std::string frame_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06d", i);
  return buf;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) fail(ErrorCode::kIo, "cannot create directory " + dir);
}

std::uint32_t semantic_code(const SceneObject& obj) {
  switch (obj.label) {
    case 0: return kSemanticCar;
    case 1: return 30;  // person
    case 2: return 31;  // bicyclist
    default: break;
  }
  if (obj.kind == "wall") return 50;
  if (obj.kind == "pole") return 80;
  if (obj.kind == "bush" || obj.kind == "tree") return 70;
  return 99;
}

PipelineConfig with_sensor(const PipelineConfig& cfg) {
  PipelineConfig c = cfg;
  c.synth.sensor = c.projection;
  return c;
}

struct RenderedFrame {
  Scene scene;
  RenderedScan scan;
};

RenderedFrame render_frame(const PipelineConfig& cfg, std::uint64_t seed, int n_id, int n_ood) {
  const PipelineConfig c = with_sensor(cfg);
  RenderedFrame f;
  f.scene = detection_scene(c.synth, seed, n_id, n_ood);
  f.scan = render_scan(f.scene, c.projection, c.synth.render, derive_seed(seed, 1));
  return f;
}

bool inside_box(const Vec3& p, const Box3& b, double margin) {
  const Vec3 d = p - b.center;
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const Vec3 local(c * d.x() + s * d.y(), -s * d.x() + c * d.y(), d.z());
  return (local.cwiseAbs() - b.size / 2).maxCoeff() <= margin;
}

// Proposals the pipeline front end extracts from rendered detection scenes. Each ID object
// contributes its main proposal: the one with most points in its box, provided at least 80%
// of that proposal's points are inside.
std::vector<LabeledProposal> scene_id_proposals(const PipelineConfig& c, std::uint64_t seed, int scenes) {
  std::vector<LabeledProposal> out;
  for (int k = 0; k < scenes; ++k) {
    const RenderedFrame f = render_frame(c, derive_seed(seed, static_cast<std::uint64_t>(k)), 6, 4);
    const OrganizedCloud cloud = project_cloud(sanitize_points(f.scan.points), c.projection);
    const GroundResult g = segment_ground(cloud, c.ground, c.seed, 1);
    const ClusterLabels labels = cluster_depth(cloud, g.mask, c.cluster, c.projection);
    const auto proposals = extract_proposals(cloud, labels, c.proposal, c.seed);
    for (const auto& obj : f.scene.objects) {
      if (obj.label < 0) continue;
      const Proposal* best = nullptr;
      std::ptrdiff_t best_in = 0;
      for (const auto& p : proposals) {
        const auto in = std::count_if(p.points.begin(), p.points.end(),
                                      [&](const Vec3& q) { return inside_box(q, obj.box, 0.1); });
        if (in > best_in && 5 * in >= 4 * static_cast<std::ptrdiff_t>(p.points.size())) {
          best = &p;
          best_in = in;
        }
      }
      if (!best) continue;
      LabeledProposal item;
      item.proposal = *best;
      item.label = obj.label;
      item.gt_box = obj.box;
      out.push_back(std::move(item));
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> expand_inputs(const std::string& pattern) {
  std::vector<std::string> out;
  if (fs::is_directory(pattern)) {
    for (const auto& e : fs::directory_iterator(pattern)) {
      if (e.is_regular_file() && e.path().extension() == ".bin") out.push_back(e.path().string());
    }
  } else if (pattern.find_first_of("*?[") != std::string::npos) {
    glob_t g{};
    if (::glob(pattern.c_str(), 0, nullptr, &g) == 0) {
      for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
    }
    ::globfree(&g);
  } else if (fs::is_regular_file(pattern)) {
    out.push_back(pattern);
  }
  if (out.empty()) fail(ErrorCode::kIo, "no input scans match " + pattern);
  std::sort(out.begin(), out.end());
  return out;
}

SynthFrame synth_frame(const PipelineConfig& cfg, std::uint64_t seed, int n_id, int n_ood) {
  RenderedFrame r = render_frame(cfg, seed, n_id, n_ood);
  SynthFrame f;
  f.points = std::move(r.scan.points);
  f.ground = ground_labels(r.scan);
  for (const auto& obj : r.scene.objects) {
    if (obj.label >= 0) f.boxes.emplace_back(static_cast<ObjectClass>(obj.label), obj.box);
  }
  return f;
}

KeyValues synth_write(const PipelineConfig& cfg, std::uint64_t seed, const SynthOptions& opt,
                      const std::string& out_dir) {
  if (opt.frames < 1 || opt.id_per_frame < 0 || opt.ood_per_frame < 0) {
    fail(ErrorCode::kConfig, "synth: frames must be >= 1 and object counts >= 0");
  }
  ensure_dir(out_dir);
  std::size_t points = 0, id_objects = 0;
  for (int i = 0; i < opt.frames; ++i) {
    const RenderedFrame r = render_frame(cfg, derive_seed(seed, static_cast<std::uint64_t>(i)), opt.id_per_frame,
                                         opt.ood_per_frame);
    const std::string stem = (fs::path(out_dir) / frame_name(i)).string();
    write_kitti_bin(stem + ".bin", r.scan.points);
    std::vector<std::uint32_t> sem(r.scan.points.size(), kSemanticUnlabeled);
    for (std::size_t k = 0; k < sem.size(); ++k) {
      const int owner = r.scan.owner[k];
      sem[k] = owner == kOwnerGround ? kSemanticRoad : semantic_code(r.scene.objects[static_cast<std::size_t>(owner)]);
    }
    write_semantic_labels(stem + ".label", sem);
    write_scene_labels(stem + ".txt", r.scene);
    points += r.scan.points.size();
    id_objects += static_cast<std::size_t>(
        std::count_if(r.scene.objects.begin(), r.scene.objects.end(), [](const auto& o) { return o.label >= 0; }));
  }
  KeyValues kv = {{"frames", std::to_string(opt.frames)},
                  {"seed", std::to_string(seed)},
                  {"id_per_frame", std::to_string(opt.id_per_frame)},
                  {"ood_per_frame", std::to_string(opt.ood_per_frame)},
                  {"points", std::to_string(points)},
                  {"id_objects", std::to_string(id_objects)}};
  write_text((fs::path(out_dir) / "manifest.kv").string(), format_kv(kv));
  return kv;
}

TrainOutcome train_networks(const PipelineConfig& cfg, const ProgressFn& progress) {
  const PipelineConfig c = with_sensor(cfg);
  c.validate();
  TrainConfig t = c.train;
  t.seed = c.seed;

  const auto data = synth_dataset(c.synth, c.proposal, c.seed, c.synth_id, c.synth_ood);
  TrainHistory hc, hb;
  auto hook = [&](const char* stage) -> EpochCallback {
    if (!progress) return {};
    return [&progress, stage](int epoch, double loss) { progress(stage, epoch, loss); };
  };
  TrainOutcome out;
  out.classifier = train_classifier(data, t, c.proposal, &hc, hook("classifier"));
  out.box = train_box_network(data, t, c.proposal, &hb, hook("box"));

  const int n_cal = std::max(200, c.synth_id / 4);
  const auto calib = synth_dataset(c.synth, c.proposal, derive_seed(c.seed, 0xCA11B), n_cal, n_cal);
  const EnergyTable et = score_items(out.classifier, out.box, calib, c.proposal, c.energy.temperature);
  std::vector<double> id_c, id_b, ood_c;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < calib.size(); ++i) {
    if (calib[i].label >= 0) {
      id_c.push_back(et.cls[i]);
      id_b.push_back(et.box[i]);
      correct += et.predicted[i] == calib[i].label;
    } else {
      ood_c.push_back(et.cls[i]);
    }
  }
  const auto scene_items =
      scene_id_proposals(c, derive_seed(c.seed, 0xCA11C), std::max(20, c.synth_id / 20));
  const EnergyTable st = score_items(out.classifier, out.box, scene_items, c.proposal, c.energy.temperature);
  out.energy = c.energy;
  out.energy.gamma_cls = calibrate_threshold(st.cls.empty() ? id_c : st.cls, kGateCalibrationRate);
  out.energy.gamma_box = calibrate_threshold(st.box.empty() ? id_b : st.box, kGateCalibrationRate);
  std::size_t scene_pass = 0;
  for (std::size_t i = 0; i < scene_items.size(); ++i) {
    scene_pass += id_passthrough(st.cls[i], st.box[i], out.energy) == GateDecision::kIn;
  }

  std::size_t id_pass = 0, ood_pass = 0, n_id = 0, n_ood = 0;
  for (std::size_t i = 0; i < calib.size(); ++i) {
    const bool pass = id_passthrough(et.cls[i], et.box[i], out.energy) == GateDecision::kIn;
    (calib[i].label >= 0 ? n_id : n_ood)++;
    (calib[i].label >= 0 ? id_pass : ood_pass) += pass;
  }
  out.report = {{"train_items", std::to_string(data.size())},
                {"epochs", std::to_string(t.epochs)},
                {"classifier_final_loss", num(hc.epoch_loss.empty() ? 0.0 : hc.epoch_loss.back())},
                {"box_final_loss", num(hb.epoch_loss.empty() ? 0.0 : hb.epoch_loss.back())},
                {"calibration_items", std::to_string(calib.size())},
                {"calibration_accuracy", num(static_cast<double>(correct) / static_cast<double>(id_c.size()))},
                {"calibration_auroc_cls", num(auroc(id_c, ood_c))},
                {"gamma_c", num(out.energy.gamma_cls)},
                {"gamma_b", num(out.energy.gamma_box)},
                {"joint_id_pass_rate", num(static_cast<double>(id_pass) / static_cast<double>(n_id))},
                {"joint_ood_pass_rate", num(static_cast<double>(ood_pass) / static_cast<double>(n_ood))},
                {"scene_calibration_items", std::to_string(scene_items.size())},
                {"scene_joint_id_pass_rate",
                 num(scene_items.empty() ? 0.0 : static_cast<double>(scene_pass) / static_cast<double>(scene_items.size()))}};
  return out;
}

KeyValues train_run(const PipelineConfig& cfg, const std::string& out_dir, const ProgressFn& progress) {
  ensure_dir(out_dir);
  TrainOutcome res = train_networks(cfg, progress);
  const fs::path dir(out_dir);
  to_archive(res.classifier).save((dir / "classifier.pcrd").string());
  to_archive(res.box).save((dir / "box.pcrd").string());

  PipelineConfig detect_cfg = cfg;
  detect_cfg.energy = res.energy;
  detect_cfg.classifier_weights = "classifier.pcrd";
  detect_cfg.box_weights = "box.pcrd";
  detect_cfg.save((dir / "detect.cfg").string());

  KeyValues kv = res.report;
  kv.emplace_back("config_hash", std::to_string(config_hash(cfg)));
  kv.emplace_back("rng_seed", std::to_string(cfg.seed));
  kv.emplace_back("detect_config", (dir / "detect.cfg").string());
  write_text((dir / "train.meta").string(), format_kv(kv));
  return kv;
}

KeyValues eval_ground(const PipelineConfig& cfg, const std::string& data, const std::string& pred_dir) {
  cfg.validate();
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0, frames = 0;
  double min_iou = 1.0, ground_ms = 0.0;
  for (const auto& bin : expand_inputs(data)) {
    const fs::path p(bin);
    const std::string label_path = (p.parent_path() / p.stem()).string() + ".label";
    if (!fs::exists(label_path)) continue;
    const auto gt_all = semantic_ground_mask(read_semantic_labels(label_path));
    SegScore s;
    if (!pred_dir.empty()) {
      const auto pred = semantic_ground_mask(read_semantic_labels((fs::path(pred_dir) / p.stem()).string() + ".label"));
      s = seg_metrics(pred, gt_all);
    } else {
      const PointList raw = read_kitti_bin(bin);
      if (raw.size() != gt_all.size()) fail(ErrorCode::kInvalidInput, label_path + ": label count differs from scan");
      std::vector<std::size_t> kept;
      const PointList clean = sanitize_points(raw, &kept);
      std::vector<std::uint8_t> gt(kept.size());
      for (std::size_t i = 0; i < kept.size(); ++i) gt[i] = gt_all[kept[i]];
      const OrganizedCloud cloud = project_cloud(clean, cfg.projection);
      const auto t0 = std::chrono::steady_clock::now();
      const GroundResult g = segment_ground(cloud, cfg.ground, cfg.seed, 1);
      ground_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      s = seg_metrics(cloud, g.mask, gt);
    }
    tp += s.tp, fp += s.fp, tn += s.tn, fn += s.fn;
    min_iou = std::min(min_iou, s.iou);
    ++frames;
  }
  if (frames == 0) fail(ErrorCode::kIo, "eval-ground: no scan with a matching .label file under " + data);
  KeyValues kv = {{"frames", std::to_string(frames)}, {"source", pred_dir.empty() ? "pipeline" : "predictions"}};
  for (auto& e : seg_report(seg_score(tp, fp, tn, fn))) kv.push_back(e);
  kv.emplace_back("min_frame_iou", num(min_iou));
  if (pred_dir.empty()) kv.emplace_back("mean_ground_ms", num(ground_ms / static_cast<double>(frames)));
  return kv;
}

KeyValues eval_detect(const EvalDetectOptions& opt) {
  Difficulty diff;
  if (!parse_difficulty(opt.difficulty, diff)) fail(ErrorCode::kConfig, "unknown difficulty " + opt.difficulty);
  if (!fs::is_directory(opt.labels)) fail(ErrorCode::kIo, "label directory not found: " + opt.labels);

  std::vector<fs::path> label_files;
  for (const auto& e : fs::directory_iterator(opt.labels)) {
    if (e.is_regular_file() && e.path().extension() == ".txt") label_files.push_back(e.path());
  }
  std::sort(label_files.begin(), label_files.end());

  std::map<std::string, int> frame_ids;
  std::vector<ClassGt> gts;
  std::size_t ignored = 0;
  for (const auto& lf : label_files) {
    const int id = static_cast<int>(frame_ids.size());
    frame_ids[lf.stem().string()] = id;
    if (opt.calib.empty()) {
      for (const auto& [cls, box] : load_box_labels(lf.string())) gts.push_back({GtBox{box, id, false}, cls});
    } else {
      const KittiCalib calib = load_kitti_calib((fs::path(opt.calib) / lf.filename()).string());
      KittiFrameGt g = kitti_ground_truth(load_kitti_label_file(lf.string()), calib, diff, id);
      ignored += g.ignored.size();
      gts.insert(gts.end(), g.boxes.begin(), g.boxes.end());
    }
  }

  std::vector<ClassDetection> dets;
  std::size_t unmatched = 0;
  for (const auto& d : load_detections(opt.detections)) {
    const auto it = frame_ids.find(d.frame);
    if (it == frame_ids.end()) {
      ++unmatched;
      continue;
    }
    dets.push_back({ScoredBox{d.box, d.score, it->second}, d.cls});
  }

  std::array<double, kNumClasses> th{};
  for (int c = 0; c < kNumClasses; ++c) th[c] = default_iou_threshold(static_cast<ObjectClass>(c));
  const DetectionReport rep = evaluate_detections(dets, gts, th);
  const std::string difficulty = opt.calib.empty() ? "synthetic" : opt.difficulty;
  if (!opt.csv_out.empty()) write_text(opt.csv_out, detection_csv(rep, th, difficulty));

  KeyValues kv = {{"frames", std::to_string(frame_ids.size())},
                  {"difficulty", difficulty},
                  {"detections", std::to_string(dets.size())},
                  {"ground_truth", std::to_string(gts.size())},
                  {"ignored_objects", std::to_string(ignored)},
                  {"detections_without_frame", std::to_string(unmatched)}};
  for (auto& e : detection_report(rep)) kv.push_back(e);
  return kv;
}

Detector random_detector(const PipelineConfig& cfg) {
  ClassifierParams<double> cls;
  BoxParams<double> box;
  init_params(cls, derive_seed(cfg.seed, 1));
  init_params(box, derive_seed(cfg.seed, 2));
  return Detector(cfg, cls, box);
}

KeyValues bench(const PipelineConfig& cfg, const BenchOptions& opt, std::string* csv) {
  if (opt.repeats < 1) fail(ErrorCode::kConfig, "bench: repeats must be >= 1");
  const bool trained = !cfg.classifier_weights.empty() || !cfg.box_weights.empty();
  Detector det = trained ? Detector::load(cfg) : random_detector(cfg);
  if (!trained) {
    // Random weights would gate away every proposal; time the box network on all of them.
    det.gate_classifier = false;
    det.gate_box = false;
  }

  std::vector<PointList> scans;
  if (opt.input.empty()) {
    scans.push_back(synth_frame(cfg, cfg.seed, 20, 12).points);
  } else {
    for (const auto& f : expand_inputs(opt.input)) scans.push_back(read_kitti_bin(f));
  }

  const auto runs = benchmark(det, scans, opt.repeats);
  const LatencyStats stats = summarize_latency(runs);
  const std::string table = latency_csv(runs);
  if (!opt.csv_out.empty()) write_text(opt.csv_out, table);
  if (csv) *csv = table;

  KeyValues kv = {{"scans", std::to_string(scans.size())},
                  {"repeats", std::to_string(opt.repeats)},
                  {"threads", "1"},
                  {"weights", trained ? "trained" : "random"},
                  {"gates", det.gate_classifier ? "on" : "off"},
                  {"grid", std::to_string(cfg.projection.rows) + "x" + std::to_string(cfg.projection.cols)},
                  {"hardware_threads", std::to_string(std::thread::hardware_concurrency())}};
  for (auto& e : latency_report(stats)) kv.push_back(e);

  if (opt.threads > 1) {
    std::vector<PointList> batch;
    for (int r = 0; r < opt.repeats; ++r) batch.insert(batch.end(), scans.begin(), scans.end());
    const auto t0 = std::chrono::steady_clock::now();
    (void)detect_batch(det, batch, opt.threads);
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    kv.emplace_back("batch_threads", std::to_string(opt.threads));
    kv.emplace_back("batch_fps", num(static_cast<double>(batch.size()) / s));
  }
  return kv;
}

KeyValues detect_files(const Detector& det, const DetectOptions& opt, std::vector<std::string>* lines) {
  const auto files = expand_inputs(opt.input);
  std::vector<ScanResult> results;
  if (opt.ply_dir.empty()) {
    std::vector<PointList> scans;
    for (const auto& f : files) scans.push_back(read_kitti_bin(f));
    results = detect_batch(det, scans, opt.threads);
  } else {
    ensure_dir(opt.ply_dir);
    for (const auto& f : files) {
      ScanArtifacts art;
      results.push_back(detect_scan(det, read_kitti_bin(f), &art));
      write_ply((fs::path(opt.ply_dir) / fs::path(f).stem()).string() + ".ply", art, results.back().detections);
    }
  }

  std::string text;
  std::size_t total = 0, proposals = 0, gate1 = 0;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const std::string frame = fs::path(files[i]).stem().string();
    for (const auto& d : results[i].detections) {
      const std::string line = detection_line(frame, d);
      text += line + "\n";
      if (lines) lines->push_back(line);
    }
    total += results[i].detections.size();
    proposals += results[i].counts.proposals;
    gate1 += results[i].counts.gate1;
  }
  if (!opt.out.empty()) write_text(opt.out, text);
  return {{"scans", std::to_string(files.size())},
          {"proposals", std::to_string(proposals)},
          {"gate1", std::to_string(gate1)},
          {"detections", std::to_string(total)}};
}

}  // namespace pcrd
