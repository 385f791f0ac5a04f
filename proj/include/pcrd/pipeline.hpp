#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pcrd/clustering.hpp"
#include "pcrd/config.hpp"
#include "pcrd/evaluation.hpp"
#include "pcrd/ground.hpp"
#include "pcrd/networks.hpp"
#include "pcrd/projection.hpp"
#include "pcrd/proposals.hpp"

namespace pcrd {

/// Configuration plus float32 inference weights.
class Detector {
 public:
  Detector(const PipelineConfig& cfg, const ClassifierParams<double>& cls, const BoxParams<double>& box);
  /// Reads both weight files named in the config; throws kConfig when either is unusable.
  static Detector load(const PipelineConfig& cfg);

  const PipelineConfig& config() const { return cfg_; }
  PipelineConfig& config() { return cfg_; }
  const ClassifierParams<float>& classifier() const { return cls_; }
  const BoxParams<float>& box_network() const { return box_; }

  // Ablation switches; both on for normal operation.
  bool gate_classifier = true;
  bool gate_box = true;

 private:
  PipelineConfig cfg_;
  ClassifierParams<float> cls_;
  BoxParams<float> box_;
};

struct ScanCounts {
  std::size_t points = 0;  // input points after sanitizing
  std::size_t valid = 0;   // occupied range-image cells
  std::size_t ground = 0;
  std::size_t clusters = 0;
  std::size_t proposals = 0;
  std::size_t gate1 = 0;
  std::size_t gate2 = 0;
};

struct ScanResult {
  std::vector<Detection> detections;
  StageTimes times;
  ScanCounts counts;
};

/// Intermediate products kept for inspection (PLY dump, tests).
struct ScanArtifacts {
  OrganizedCloud cloud;
  GroundResult ground;
  ClusterLabels clusters;
  std::vector<Proposal> proposals;
  std::vector<double> energy_cls;  // per proposal
  std::vector<int> gate1;          // proposal indices passing the classifier gate
};

/// Single-threaded pass over one scan. Non-finite and zero points are dropped.
ScanResult detect_scan(const Detector& det, std::span<const Point> points, ScanArtifacts* artifacts = nullptr);

/// Scan-parallel batch; result i belongs to scan i regardless of `threads`.
std::vector<ScanResult> detect_batch(const Detector& det, std::span<const PointList> scans, int threads);

/// "frame class score x y z l w h yaw"
std::string detection_line(const std::string& frame, const Detection& d);

/// ASCII PLY of the valid cells: ground grey, clusters tinted by id, detected clusters red.
void write_ply(const std::string& path, const ScanArtifacts& art, std::span<const Detection> detections);

/// One warm-up pass, then `repeats` timed passes over every scan.
std::vector<StageTimes> benchmark(const Detector& det, std::span<const PointList> scans, int repeats);

}  // namespace pcrd
