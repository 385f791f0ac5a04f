#include "pcrd/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "pcrd/networks.hpp"

namespace pcrd {

SegScore seg_score(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
  SegScore s{tp, fp, tn, fn};
  auto ratio = [](std::size_t num, std::size_t den) { return den == 0 ? 0.0 : static_cast<double>(num) / den; };
  s.precision = ratio(tp, tp + fp);
  s.recall = ratio(tp, tp + fn);
  s.accuracy = ratio(tp + tn, tp + fp + tn + fn);
  s.iou = ratio(tp, tp + fp + fn);
  return s;
}

SegScore seg_metrics(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                     std::span<const std::uint8_t> valid) {
  if (pred.size() != gt.size() || (!valid.empty() && valid.size() != gt.size())) {
    fail(ErrorCode::kInvalidInput, "seg_metrics: prediction and label counts differ");
  }
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!valid.empty() && !valid[i]) continue;
    const bool p = pred[i] != 0, g = gt[i] != 0;
    if (p && g) ++tp;
    else if (p) ++fp;
    else if (g) ++fn;
    else ++tn;
  }
  if (tp + fp + tn + fn == 0) fail(ErrorCode::kDomain, "seg_metrics: no valid points");
  return seg_score(tp, fp, tn, fn);
}

SegScore seg_metrics(const OrganizedCloud& cloud, const Mask& pred, std::span<const std::uint8_t> gt_per_point) {
  if (pred.rows() != cloud.rows() || pred.cols() != cloud.cols()) {
    fail(ErrorCode::kInvalidInput, "seg_metrics: mask shape differs from the cloud");
  }
  std::vector<std::uint8_t> p, g;
  for (std::size_t i = 0; i < cloud.valid.size(); ++i) {
    if (!cloud.valid[i]) continue;
    const auto src = cloud.source[i];
    if (src < 0 || static_cast<std::size_t>(src) >= gt_per_point.size()) {
      fail(ErrorCode::kInvalidInput, "seg_metrics: cloud refers to a point without a label");
    }
    p.push_back(pred[i]);
    g.push_back(gt_per_point[static_cast<std::size_t>(src)]);
  }
  return seg_metrics(p, g);
}

// ---- IoU --------------------------------------------------------------------------------

namespace {

using Poly = std::vector<Eigen::Vector2d>;

double signed_area(const Poly& p) {
  double a = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& u = p[i];
    const auto& v = p[(i + 1) % p.size()];
    a += u.x() * v.y() - v.x() * u.y();
  }
  return 0.5 * a;
}

Poly footprint(const Box3& b) {
  const auto c = box_corners(b);
  Poly p;
  for (int k = 0; k < 4; ++k) p.emplace_back(c[k].x(), c[k].y());
  if (signed_area(p) < 0) std::reverse(p.begin(), p.end());
  return p;
}

double cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& p) {
  return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

/// Sutherland-Hodgman against a counter-clockwise convex clipper.
Poly clip(Poly subject, const Poly& clipper) {
  for (std::size_t i = 0; i < clipper.size() && !subject.empty(); ++i) {
    const auto& a = clipper[i];
    const auto& b = clipper[(i + 1) % clipper.size()];
    Poly out;
    for (std::size_t j = 0; j < subject.size(); ++j) {
      const auto& p = subject[j];
      const auto& q = subject[(j + 1) % subject.size()];
      const double cp = cross(a, b, p), cq = cross(a, b, q);
      if (cp >= 0) out.push_back(p);
      if ((cp >= 0) != (cq >= 0)) {
        const double t = cp / (cp - cq);
        out.push_back(p + t * (q - p));
      }
    }
    subject = std::move(out);
  }
  return subject;
}

}  // namespace

double bev_intersection(const Box3& a, const Box3& b) {
  const Poly inter = clip(footprint(a), footprint(b));
  return inter.size() < 3 ? 0.0 : std::abs(signed_area(inter));
}

double iou3d(const Box3& a, const Box3& b) {
  const double zmin = std::max(a.center.z() - a.size.z() / 2, b.center.z() - b.size.z() / 2);
  const double zmax = std::min(a.center.z() + a.size.z() / 2, b.center.z() + b.size.z() / 2);
  const double overlap_h = std::max(0.0, zmax - zmin);
  if (overlap_h == 0) return 0.0;
  const double inter = bev_intersection(a, b) * overlap_h;
  const double uni = a.size.prod() + b.size.prod() - inter;
  return uni <= 0 ? 0.0 : std::clamp(inter / uni, 0.0, 1.0);
}

// ---- AP ---------------------------------------------------------------------------------

std::optional<APResult> average_precision(std::span<const ScoredBox> detections, std::span<const GtBox> gts,
                                          double iou_threshold, ApMode mode) {
  APResult r;
  r.num_gt = static_cast<std::size_t>(std::count_if(gts.begin(), gts.end(), [](const GtBox& g) { return !g.ignore; }));
  if (r.num_gt == 0) return std::nullopt;

  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return detections[a].score > detections[b].score; });

  std::vector<bool> used(gts.size(), false);
  r.curve.emplace_back(0.0, 1.0);
  for (std::size_t idx : order) {
    const auto& d = detections[idx];
    double best = -1, best_ignored = -1;
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (gts[j].frame != d.frame || used[j]) continue;
      const double iou = iou3d(d.box, gts[j].box);
      if (gts[j].ignore) {
        best_ignored = std::max(best_ignored, iou);
      } else if (iou > best) {
        best = iou;
        best_j = j;
      }
    }
    if (best >= iou_threshold) {
      used[best_j] = true;
      ++r.tp;
    } else if (best_ignored >= iou_threshold) {
      continue;
    } else {
      ++r.fp;
    }
    r.curve.emplace_back(static_cast<double>(r.tp) / r.num_gt, static_cast<double>(r.tp) / (r.tp + r.fp));
  }

  auto interpolated = [&](double recall) {
    double p = 0;
    for (const auto& [rc, pr] : r.curve) {
      if (rc >= recall - 1e-12) p = std::max(p, pr);
    }
    return p;
  };
  double sum = 0;
  if (mode == ApMode::k11Point) {
    for (int i = 0; i <= 10; ++i) sum += interpolated(i / 10.0);
    r.ap = sum / 11.0;
  } else {
    for (int i = 1; i <= 40; ++i) sum += interpolated(i / 40.0);
    r.ap = sum / 40.0;
  }
  return r;
}

double default_iou_threshold(ObjectClass cls) { return cls == ObjectClass::kCar ? 0.7 : 0.5; }

DetectionReport evaluate_detections(std::span<const ClassDetection> dets, std::span<const ClassGt> gts,
                                    const std::array<double, kNumClasses>& iou_thresholds) {
  DetectionReport rep;
  int n11 = 0, n40 = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    std::vector<ScoredBox> d;
    std::vector<GtBox> g;
    for (const auto& x : dets) {
      if (static_cast<int>(x.cls) == c) d.push_back(x.det);
    }
    for (const auto& x : gts) {
      if (static_cast<int>(x.cls) == c) g.push_back(x.gt);
    }
    rep.ap11[c] = average_precision(d, g, iou_thresholds[c], ApMode::k11Point);
    rep.ap40[c] = average_precision(d, g, iou_thresholds[c], ApMode::k40Point);
    if (rep.ap11[c]) {
      rep.map11 += rep.ap11[c]->ap;
      ++n11;
    }
    if (rep.ap40[c]) {
      rep.map40 += rep.ap40[c]->ap;
      ++n40;
    }
  }
  if (n11) rep.map11 /= n11;
  if (n40) rep.map40 /= n40;
  return rep;
}

// ---- OOD --------------------------------------------------------------------------------

double auroc(std::span<const double> id_energies, std::span<const double> ood_energies) {
  if (id_energies.empty() || ood_energies.empty()) fail(ErrorCode::kDomain, "auroc: empty energy list");
  // Rank statistic: merge both sorted lists and count OOD values above each ID value.
  std::vector<double> ood(ood_energies.begin(), ood_energies.end());
  std::sort(ood.begin(), ood.end());
  double concordant = 0;
  for (double e : id_energies) {
    const auto lo = std::lower_bound(ood.begin(), ood.end(), e);
    const auto hi = std::upper_bound(ood.begin(), ood.end(), e);
    concordant += static_cast<double>(ood.end() - hi) + 0.5 * static_cast<double>(hi - lo);
  }
  return concordant / (static_cast<double>(id_energies.size()) * static_cast<double>(ood.size()));
}

Separability ood_separability(std::span<const double> id_energies, std::span<const double> ood_energies, int bins) {
  if (bins < 1) fail(ErrorCode::kInvalidInput, "histogram needs at least one bin");
  Separability s;
  s.auroc = auroc(id_energies, ood_energies);
  s.threshold = calibrate_threshold(id_energies, 0.95);
  s.fpr95 = static_cast<double>(std::count_if(ood_energies.begin(), ood_energies.end(),
                                              [&](double e) { return e < s.threshold; })) /
            static_cast<double>(ood_energies.size());
  double lo = *std::min_element(id_energies.begin(), id_energies.end());
  double hi = *std::max_element(id_energies.begin(), id_energies.end());
  lo = std::min(lo, *std::min_element(ood_energies.begin(), ood_energies.end()));
  hi = std::max(hi, *std::max_element(ood_energies.begin(), ood_energies.end()));
  if (hi <= lo) hi = lo + 1.0;
  for (int i = 0; i <= bins; ++i) s.edges.push_back(lo + (hi - lo) * i / bins);
  s.id_hist.assign(static_cast<std::size_t>(bins), 0);
  s.ood_hist.assign(static_cast<std::size_t>(bins), 0);
  auto bin_of = [&](double e) {
    return static_cast<std::size_t>(std::clamp(static_cast<int>((e - lo) / (hi - lo) * bins), 0, bins - 1));
  };
  for (double e : id_energies) ++s.id_hist[bin_of(e)];
  for (double e : ood_energies) ++s.ood_hist[bin_of(e)];
  return s;
}

// ---- Latency ----------------------------------------------------------------------------

double quantile(std::vector<double> values, double q) {
  if (values.empty()) fail(ErrorCode::kDomain, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
  return values[std::clamp<std::size_t>(rank, 1, n) - 1];
}

LatencyStats summarize_latency(std::span<const StageTimes> runs) {
  LatencyStats s;
  s.samples = runs.size();
  if (runs.empty()) return s;
  for (int k = 0; k < kNumStages; ++k) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(r.stage_ms[k]);
    s.median_ms[k] = quantile(v, 0.5);
    s.p95_ms[k] = quantile(v, 0.95);
  }
  std::vector<double> total;
  for (const auto& r : runs) total.push_back(r.total_ms);
  s.median_total_ms = quantile(total, 0.5);
  s.p95_total_ms = quantile(total, 0.95);
  s.fps = s.median_total_ms > 0 ? 1000.0 / s.median_total_ms : 0.0;
  return s;
}

// ---- Reports ----------------------------------------------------------------------------

namespace {

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

}  // namespace

std::string format_kv(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

KeyValues seg_report(const SegScore& s) {
  return {{"tp", std::to_string(s.tp)},       {"fp", std::to_string(s.fp)},
          {"tn", std::to_string(s.tn)},       {"fn", std::to_string(s.fn)},
          {"precision", num(s.precision)},    {"recall", num(s.recall)},
          {"accuracy", num(s.accuracy)},      {"iou", num(s.iou)}};
}

std::string detection_csv(const DetectionReport& r, const std::array<double, kNumClasses>& thresholds,
                          const std::string& difficulty) {
  std::string out = "class,difficulty,mode,iou_threshold,num_gt,tp,fp,ap\n";
  for (int c = 0; c < kNumClasses; ++c) {
    for (const auto& [mode, ap] : {std::pair{"11", &r.ap11[c]}, std::pair{"40", &r.ap40[c]}}) {
      if (!*ap) continue;
      const APResult& a = **ap;
      out += std::string(class_name(static_cast<ObjectClass>(c))) + "," + difficulty + "," + mode + "," +
             num(thresholds[c]) + "," + std::to_string(a.num_gt) + "," + std::to_string(a.tp) + "," +
             std::to_string(a.fp) + "," + num(a.ap) + "\n";
    }
  }
  return out;
}

KeyValues detection_report(const DetectionReport& r) {
  KeyValues kv;
  for (int c = 0; c < kNumClasses; ++c) {
    const std::string name = class_name(static_cast<ObjectClass>(c));
    kv.emplace_back("ap11." + name, r.ap11[c] ? num(r.ap11[c]->ap) : "absent");
    kv.emplace_back("ap40." + name, r.ap40[c] ? num(r.ap40[c]->ap) : "absent");
  }
  kv.emplace_back("map11", num(r.map11));
  kv.emplace_back("map40", num(r.map40));
  return kv;
}

std::string latency_csv(std::span<const StageTimes> runs) {
  std::string out = "run";
  for (const char* s : kStageNames) out += std::string(",") + s + "_ms";
  out += ",total_ms\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    out += std::to_string(i);
    for (double v : runs[i].stage_ms) out += "," + num(v);
    out += "," + num(runs[i].total_ms) + "\n";
  }
  return out;
}

KeyValues latency_report(const LatencyStats& s) {
  KeyValues kv;
  for (int k = 0; k < kNumStages; ++k) {
    kv.emplace_back(std::string(kStageNames[k]) + ".median_ms", num(s.median_ms[k]));
    kv.emplace_back(std::string(kStageNames[k]) + ".p95_ms", num(s.p95_ms[k]));
  }
  kv.emplace_back("total.median_ms", num(s.median_total_ms));
  kv.emplace_back("total.p95_ms", num(s.p95_total_ms));
  kv.emplace_back("fps", num(s.fps));
  kv.emplace_back("samples", std::to_string(s.samples));
  return kv;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path);
  out << text;
  if (!out) fail(ErrorCode::kIo, "write failed: " + path);
}

}  // namespace pcrd
