#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pcrd/common.hpp"
#include "pcrd/projection.hpp"

namespace pcrd {

// ---- Ground segmentation ----------------------------------------------------------------

struct SegScore {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double precision = 0, recall = 0, accuracy = 0, iou = 0;
};

/// Fills the ratios from the counts; undefined ratios are 0.
SegScore seg_score(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn);

/// Per-point comparison (1 = ground). Points with valid[i] == 0 are skipped when `valid`
/// is non-empty. Throws kInvalidInput on a length mismatch and kDomain when nothing is valid.
SegScore seg_metrics(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                     std::span<const std::uint8_t> valid = {});

/// Range-image prediction against per-input-point labels, through `cloud.source`.
SegScore seg_metrics(const OrganizedCloud& cloud, const Mask& pred, std::span<const std::uint8_t> gt_per_point);

// ---- Boxes and AP -----------------------------------------------------------------------

/// Area of the ground-plane intersection of two yawed rectangles.
double bev_intersection(const Box3& a, const Box3& b);
double iou3d(const Box3& a, const Box3& b);

enum class ApMode { k11Point, k40Point };

struct ScoredBox {
  Box3 box;
  double score = 0;
  int frame = 0;
};

struct GtBox {
  Box3 box;
  int frame = 0;
  bool ignore = false;  // matched detections are neither TP nor FP
};

struct APResult {
  double ap = 0;
  std::vector<std::pair<double, double>> curve;  // (recall, precision) after each ranked detection
  std::size_t num_gt = 0, tp = 0, fp = 0;
};

/// Greedy matching in descending score (input order on ties); each ground truth is
/// consumed by at most one detection at IoU >= iou_threshold. The curve is anchored at
/// (recall 0, precision 1). Returns nullopt when there is no non-ignored ground truth.
std::optional<APResult> average_precision(std::span<const ScoredBox> detections, std::span<const GtBox> gts,
                                          double iou_threshold, ApMode mode);

/// KITTI convention: 0.7 for cars, 0.5 otherwise.
double default_iou_threshold(ObjectClass cls);

struct ClassDetection {
  ScoredBox det;
  ObjectClass cls = ObjectClass::kCar;
};
struct ClassGt {
  GtBox gt;
  ObjectClass cls = ObjectClass::kCar;
};

struct DetectionReport {
  std::array<std::optional<APResult>, kNumClasses> ap11;
  std::array<std::optional<APResult>, kNumClasses> ap40;
  double map11 = 0, map40 = 0;  // means over classes that have ground truth
};

DetectionReport evaluate_detections(std::span<const ClassDetection> dets, std::span<const ClassGt> gts,
                                    const std::array<double, kNumClasses>& iou_thresholds);

// ---- OOD separability -------------------------------------------------------------------

/// Probability that a random ID energy is lower than a random OOD energy (ties count 1/2).
double auroc(std::span<const double> id_energies, std::span<const double> ood_energies);

struct Separability {
  double auroc = 0;
  double threshold = 0;  // calibrated at 95% ID pass rate
  double fpr95 = 0;      // fraction of OOD energies strictly below the threshold
  std::vector<double> edges;
  std::vector<std::size_t> id_hist, ood_hist;
};

Separability ood_separability(std::span<const double> id_energies, std::span<const double> ood_energies,
                              int bins = 20);

// ---- Latency ----------------------------------------------------------------------------

inline constexpr int kNumStages = 4;
inline constexpr std::array<const char*, kNumStages> kStageNames = {"projection", "ground", "cluster", "network"};

struct StageTimes {
  std::array<double, kNumStages> stage_ms{};
  double total_ms = 0;
};

struct LatencyStats {
  std::array<double, kNumStages> median_ms{}, p95_ms{};
  double median_total_ms = 0, p95_total_ms = 0;
  double fps = 0;  // 1000 / median total
  std::size_t samples = 0;
};

/// Nearest-rank quantile of an unsorted sample.
double quantile(std::vector<double> values, double q);
LatencyStats summarize_latency(std::span<const StageTimes> runs);

// ---- Reports ----------------------------------------------------------------------------

using KeyValues = std::vector<std::pair<std::string, std::string>>;

std::string format_kv(const KeyValues& kv);
KeyValues seg_report(const SegScore& s);
/// One CSV row per class and AP mode: class,difficulty,mode,iou_threshold,num_gt,tp,fp,ap
std::string detection_csv(const DetectionReport& r, const std::array<double, kNumClasses>& thresholds,
                          const std::string& difficulty);
KeyValues detection_report(const DetectionReport& r);
/// Header plus one row per run: run,projection_ms,ground_ms,cluster_ms,network_ms,total_ms
std::string latency_csv(std::span<const StageTimes> runs);
KeyValues latency_report(const LatencyStats& s);

void write_text(const std::string& path, const std::string& text);

}  // namespace pcrd
