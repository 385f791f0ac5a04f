#include "pcrd/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <limits>
#include <thread>

namespace pcrd {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

Detector::Detector(const PipelineConfig& cfg, const ClassifierParams<double>& cls, const BoxParams<double>& box)
    : cfg_(cfg), cls_(cls.cast<float>()), box_(box.cast<float>()) {
  cfg_.validate();
}

Detector Detector::load(const PipelineConfig& cfg) {
  cfg.check_weight_files();
  ClassifierParams<double> cls;
  BoxParams<double> box;
  try {
    from_archive(WeightArchive::load(cfg.classifier_weights), cls);
    from_archive(WeightArchive::load(cfg.box_weights), box);
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, std::string("weights: ") + e.what());
  }
  return Detector(cfg, cls, box);
}

ScanResult detect_scan(const Detector& det, std::span<const Point> points, ScanArtifacts* artifacts) {
  const PipelineConfig& cfg = det.config();
  ScanResult res;
  ScanArtifacts local;
  ScanArtifacts& art = artifacts ? *artifacts : local;
  art = ScanArtifacts{};

  const auto t_start = Clock::now();
  auto t0 = t_start;
  const PointList clean = sanitize_points(points);
  art.cloud = project_cloud(clean, cfg.projection);
  res.times.stage_ms[0] = ms_since(t0);
  res.counts.points = clean.size();
  res.counts.valid = art.cloud.valid_count();

  t0 = Clock::now();
  art.ground = segment_ground(art.cloud, cfg.ground, cfg.seed, 1);
  res.times.stage_ms[1] = ms_since(t0);
  res.counts.ground = static_cast<std::size_t>(std::count(art.ground.mask.data().begin(), art.ground.mask.data().end(), 1));

  t0 = Clock::now();
  art.clusters = cluster_depth(art.cloud, art.ground.mask, cfg.cluster, cfg.projection);
  art.proposals = extract_proposals(art.cloud, art.clusters, cfg.proposal, cfg.seed);
  res.times.stage_ms[2] = ms_since(t0);
  res.counts.clusters = static_cast<std::size_t>(art.clusters.count);
  res.counts.proposals = art.proposals.size();

  t0 = Clock::now();
  if (!art.proposals.empty()) {
    const auto in = stack_proposals<float>(art.proposals, cfg.proposal);
    const nn::Matrix<float> logits = classify(det.classifier(), in);
    std::vector<std::array<double, kNumClasses>> rows(art.proposals.size());
    for (std::size_t i = 0; i < art.proposals.size(); ++i) {
      for (int k = 0; k < kNumClasses; ++k) rows[i][k] = logits(static_cast<Eigen::Index>(i), k);
      const double e = energy_score(rows[i], cfg.energy.temperature);
      art.energy_cls.push_back(e);
      if (!det.gate_classifier || classifier_gate(e, cfg.energy) == GateDecision::kIn) {
        art.gate1.push_back(static_cast<int>(i));
      }
    }
    res.counts.gate1 = art.gate1.size();

    if (!art.gate1.empty()) {
      std::vector<Proposal> survivors;
      survivors.reserve(art.gate1.size());
      for (int i : art.gate1) survivors.push_back(art.proposals[static_cast<std::size_t>(i)]);
      const auto box_in = stack_proposals<float>(survivors, cfg.proposal);
      const auto preds = estimate_boxes(det.box_network(), box_in);
      for (std::size_t j = 0; j < survivors.size(); ++j) {
        const auto i = static_cast<std::size_t>(art.gate1[j]);
        const auto eb_logits = box_energy_logits(preds[j]);
        const double eb = energy_score(eb_logits, cfg.energy.temperature);
        const double ec = art.energy_cls[i];
        if (det.gate_box) {
          EnergyConfig e = cfg.energy;
          if (!det.gate_classifier) e.gamma_cls = std::numeric_limits<double>::infinity();
          if (id_passthrough(ec, eb, e) == GateDecision::kOut) continue;
        }
        const DecodedBox dec = decode_box(preds[j], survivors[j]);
        Detection d;
        d.box = dec.box;
        d.degenerate = dec.degenerate;
        d.class_probs = softmax3(rows[i]);
        d.cls = static_cast<ObjectClass>(std::max_element(d.class_probs.begin(), d.class_probs.end()) -
                                         d.class_probs.begin());
        d.energy_cls = ec;
        d.energy_box = eb;
        d.cluster_id = survivors[j].cluster_id;
        res.detections.push_back(d);
      }
    }
  }
  res.times.stage_ms[3] = ms_since(t0);
  res.counts.gate2 = res.detections.size();
  res.times.total_ms = ms_since(t_start);
  return res;
}

std::vector<ScanResult> detect_batch(const Detector& det, std::span<const PointList> scans, int threads) {
  std::vector<ScanResult> out(scans.size());
  threads = std::clamp(threads, 1, static_cast<int>(std::max<std::size_t>(1, scans.size())));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < scans.size(); i = next++) out[i] = detect_scan(det, scans[i]);
  };
  if (threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work);
  }
  return out;
}

std::string detection_line(const std::string& frame, const Detection& d) {
  char buf[256];
  const Box3& b = d.box;
  std::snprintf(buf, sizeof buf, "%s %s %.6f %.4f %.4f %.4f %.4f %.4f %.4f %.6f", frame.c_str(), class_name(d.cls),
                d.score(), b.center.x(), b.center.y(), b.center.z(), b.size.x(), b.size.y(), b.size.z(), b.yaw);
  return buf;
}

void write_ply(const std::string& path, const ScanArtifacts& art, std::span<const Detection> detections) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path);
  const OrganizedCloud& c = art.cloud;
  std::vector<std::uint8_t> detected(static_cast<std::size_t>(art.clusters.count) + 1, 0);
  for (const auto& d : detections) {
    if (d.cluster_id > 0 && d.cluster_id <= art.clusters.count) detected[static_cast<std::size_t>(d.cluster_id)] = 1;
  }
  out << "ply\nformat ascii 1.0\nelement vertex " << c.valid_count()
      << "\nproperty float x\nproperty float y\nproperty float z\n"
         "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  const bool has_ground = !art.ground.mask.empty();
  const bool has_labels = !art.clusters.labels.empty();
  for (int r = 0; r < c.rows(); ++r) {
    for (int col = 0; col < c.cols(); ++col) {
      if (!c.valid(r, col)) continue;
      int red = 255, green = 255, blue = 255;
      const int label = has_labels ? art.clusters.labels(r, col) : 0;
      if (has_ground && art.ground.mask(r, col)) {
        red = green = blue = 128;
      } else if (label > 0 && detected[static_cast<std::size_t>(label)]) {
        red = 255, green = 0, blue = 0;
      } else if (label > 0) {
        const auto h = static_cast<unsigned>(label) * 2654435761u;
        red = 64 + static_cast<int>(h & 127u);
        green = 64 + static_cast<int>((h >> 8) & 127u);
        blue = 128 + static_cast<int>((h >> 16) & 127u);
      }
      out << c.x(r, col) << ' ' << c.y(r, col) << ' ' << c.z(r, col) << ' ' << red << ' ' << green << ' ' << blue
          << '\n';
    }
  }
  if (!out) fail(ErrorCode::kIo, "write failed: " + path);
}

std::vector<StageTimes> benchmark(const Detector& det, std::span<const PointList> scans, int repeats) {
  std::vector<StageTimes> runs;
  if (scans.empty() || repeats < 1) return runs;
  (void)detect_scan(det, scans.front());
  runs.reserve(static_cast<std::size_t>(repeats) * scans.size());
  for (int r = 0; r < repeats; ++r) {
    for (const auto& s : scans) runs.push_back(detect_scan(det, s).times);
  }
  return runs;
}

}  // namespace pcrd
