#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "doctest.h"
#include "pcrd/evaluation.hpp"

using namespace pcrd;

namespace {

Box3 cube(double x, double y = 0, double z = 0, double yaw = 0) { return Box3{Vec3(x, y, z), Vec3::Ones(), yaw}; }

}  // namespace

TEST_CASE("segmentation scores from counts") {
  const auto s = seg_score(93, 7, 97, 3);
  CHECK(s.precision == doctest::Approx(0.93));
  CHECK(s.recall == doctest::Approx(0.96875));
  CHECK(s.iou == doctest::Approx(93.0 / 103.0));
  CHECK(s.iou == doctest::Approx(0.9029).epsilon(1e-4));
  CHECK(s.accuracy == doctest::Approx(0.95));
  const auto empty = seg_score(0, 0, 10, 0);
  CHECK(empty.precision == 0);
  CHECK(empty.iou == 0);
}

TEST_CASE("per-point segmentation metrics") {
  const std::vector<std::uint8_t> pred{1, 1, 0, 0, 1}, gt{1, 0, 0, 1, 1}, valid{1, 1, 1, 1, 0};
  const auto s = seg_metrics(pred, gt, valid);
  CHECK(s.tp == 1);
  CHECK(s.fp == 1);
  CHECK(s.tn == 1);
  CHECK(s.fn == 1);
  const auto swapped = seg_metrics(gt, pred, valid);
  CHECK(swapped.precision == s.recall);
  CHECK(swapped.recall == s.precision);
  CHECK_THROWS_AS(seg_metrics(pred, std::vector<std::uint8_t>{1}), Error);
  CHECK_THROWS_AS(seg_metrics(pred, gt, std::vector<std::uint8_t>(5, 0)), Error);
}

TEST_CASE("swapping prediction and truth swaps precision and recall") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    std::vector<std::uint8_t> a(200), b(200);
    for (auto& v : a) v = rng() % 2;
    for (auto& v : b) v = rng() % 3 == 0;
    const auto x = seg_metrics(a, b), y = seg_metrics(b, a);
    CHECK(x.precision == doctest::Approx(y.recall));
    CHECK(x.recall == doctest::Approx(y.precision));
    CHECK(x.iou == doctest::Approx(y.iou));
  }
}

TEST_CASE("3d iou") {
  CHECK(iou3d(cube(0), cube(0)) == doctest::Approx(1));
  CHECK(iou3d(cube(0), cube(0.5)) == doctest::Approx(1.0 / 3));
  CHECK(iou3d(cube(0), cube(0, 0, 0.5)) == doctest::Approx(1.0 / 3));
  CHECK(iou3d(cube(0), cube(3)) == 0);
  // a unit square rotated by 45 degrees inside a larger one
  const Box3 big{Vec3::Zero(), Vec3(4, 4, 1), 0};
  CHECK(iou3d(big, cube(0, 0, 0, std::numbers::pi / 4)) == doctest::Approx(1.0 / 16));
  CHECK(bev_intersection(cube(0, 0, 0, 0.3), cube(0, 0, 0, 0.3 + std::numbers::pi / 2)) == doctest::Approx(1));
  CHECK(iou3d(cube(0, 0, 0, 0.2), cube(0, 0, 0, 0.2 + std::numbers::pi)) == doctest::Approx(1));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 50; ++t) {
    const Box3 a{Vec3(u(rng), u(rng), u(rng)), Vec3(1 + u(rng) * 0.5, 1 + u(rng) * 0.5, 1), u(rng) * 3};
    const Box3 b{Vec3(u(rng), u(rng), u(rng)), Vec3(2 + u(rng), 1, 1.5), u(rng) * 3};
    const double v = iou3d(a, b);
    CHECK(v >= 0);
    CHECK(v <= 1 + 1e-12);
    CHECK(v == doctest::Approx(iou3d(b, a)));
  }
}

TEST_CASE("average precision fixtures") {
  SUBCASE("single exact match") {
    const std::vector<ScoredBox> d{{cube(0), 0.9, 0}};
    const std::vector<GtBox> g{{cube(0), 0, false}};
    CHECK(average_precision(d, g, 0.5, ApMode::k11Point)->ap == 1.0);
    CHECK(average_precision(d, g, 0.5, ApMode::k40Point)->ap == 1.0);
  }
  SUBCASE("false positive ranked first") {
    const std::vector<ScoredBox> d{{cube(10), 0.9, 0}, {cube(0), 0.8, 0}};
    const std::vector<GtBox> g{{cube(0), 0, false}};
    const auto r = average_precision(d, g, 0.5, ApMode::k11Point);
    CHECK(r->ap == doctest::Approx(6.0 / 11).epsilon(1e-15));
    CHECK(r->tp == 1);
    CHECK(r->fp == 1);
  }
  SUBCASE("forty-point walk") {
    // ranked T, F, T, F with a third object never found:
    // precision 1 up to recall 1/3, then 2/3 up to recall 2/3, then nothing
    const std::vector<ScoredBox> d{{cube(0), 0.9, 0}, {cube(20), 0.8, 0}, {cube(5), 0.7, 0}, {cube(30), 0.6, 0}};
    const std::vector<GtBox> g{{cube(0), 0, false}, {cube(5), 0, false}, {cube(-8), 0, false}};
    CHECK(average_precision(d, g, 0.5, ApMode::k40Point)->ap == doctest::Approx(13.0 / 24).epsilon(1e-15));
    CHECK(average_precision(d, g, 0.5, ApMode::k11Point)->ap == doctest::Approx(6.0 / 11).epsilon(1e-15));
  }
  SUBCASE("no ground truth") {
    const std::vector<ScoredBox> d{{cube(0), 0.9, 0}};
    CHECK_FALSE(average_precision(d, std::vector<GtBox>{}, 0.5, ApMode::k11Point));
  }
  SUBCASE("frames keep matches apart") {
    const std::vector<ScoredBox> d{{cube(0), 0.9, 1}};
    const std::vector<GtBox> g{{cube(0), 0, false}};
    CHECK(average_precision(d, g, 0.5, ApMode::k11Point)->ap == doctest::Approx(1.0 / 11));
  }
  SUBCASE("ignored ground truth absorbs its detection") {
    const std::vector<ScoredBox> d{{cube(0), 0.9, 0}, {cube(5), 0.5, 0}};
    const std::vector<GtBox> g{{cube(0), 0, true}, {cube(5), 0, false}};
    const auto r = average_precision(d, g, 0.5, ApMode::k40Point);
    CHECK(r->ap == 1.0);
    CHECK(r->num_gt == 1);
    CHECK(r->fp == 0);
  }
  SUBCASE("a ground truth is consumed once") {
    const std::vector<ScoredBox> d{{cube(0), 0.9, 0}, {cube(0), 0.8, 0}};
    const std::vector<GtBox> g{{cube(0), 0, false}};
    const auto r = average_precision(d, g, 0.5, ApMode::k11Point);
    CHECK(r->tp == 1);
    CHECK(r->fp == 1);
  }
}

TEST_CASE("average precision ignores monotone score transforms") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 10; ++t) {
    std::vector<GtBox> g;
    std::vector<ScoredBox> d, e;
    for (int i = 0; i < 12; ++i) g.push_back({cube(3.0 * i), i % 3, false});
    for (int i = 0; i < 20; ++i) {
      const double x = 3.0 * (rng() % 14) + 0.2 * u(rng);
      const double s = u(rng);
      d.push_back({cube(x), s, static_cast<int>(rng() % 3)});
      e.push_back({cube(x), std::exp(5 * s) - 3, d.back().frame});
    }
    for (auto mode : {ApMode::k11Point, ApMode::k40Point}) {
      CHECK(average_precision(d, g, 0.5, mode)->ap == average_precision(e, g, 0.5, mode)->ap);
    }
  }
}

TEST_CASE("per-class evaluation and csv") {
  const std::vector<ClassDetection> dets{{{cube(0), 0.9, 0}, ObjectClass::kCar}, {{cube(4), 0.9, 0}, ObjectClass::kPedestrian}};
  const std::vector<ClassGt> gts{{{cube(0), 0, false}, ObjectClass::kCar}, {{cube(9), 0, false}, ObjectClass::kPedestrian}};
  const std::array<double, kNumClasses> th{0.7, 0.5, 0.5};
  const auto rep = evaluate_detections(dets, gts, th);
  REQUIRE(rep.ap40[0]);
  REQUIRE(rep.ap40[1]);
  CHECK_FALSE(rep.ap40[2]);
  CHECK(rep.ap40[0]->ap == 1.0);
  CHECK(rep.ap40[1]->ap == 0.0);
  CHECK(rep.map40 == doctest::Approx(0.5));
  const auto csv = detection_csv(rep, th, "moderate");
  std::istringstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header == "class,difficulty,mode,iou_threshold,num_gt,tp,fp,ap");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == 4);
  CHECK(default_iou_threshold(ObjectClass::kCar) == 0.7);
  CHECK(default_iou_threshold(ObjectClass::kCyclist) == 0.5);
}

TEST_CASE("auroc") {
  CHECK(auroc(std::vector<double>{1, 2, 3}, std::vector<double>{2.5, 4, 5}) == doctest::Approx(8.0 / 9));
  CHECK(auroc(std::vector<double>{1, 2}, std::vector<double>{3, 4}) == 1.0);
  const std::vector<double> same{1, 5, 2, 8};
  CHECK(auroc(same, same) == 0.5);
  CHECK_THROWS_AS(auroc(std::vector<double>{}, same), Error);
  const auto s = ood_separability(std::vector<double>{1, 2, 3}, std::vector<double>{2.5, 4, 5}, 4);
  CHECK(s.edges.size() == 5);
  std::size_t total = 0;
  for (auto v : s.id_hist) total += v;
  CHECK(total == 3);
  CHECK(s.threshold > 3.0);
  CHECK(s.fpr95 == doctest::Approx(1.0 / 3));
}

TEST_CASE("latency statistics") {
  StageTimes one{{1, 2, 3, 4}, 10.5};
  const auto s = summarize_latency(std::span(&one, 1));
  CHECK(s.median_total_ms == 10.5);
  CHECK(s.p95_total_ms == 10.5);
  CHECK(s.median_ms[2] == 3);
  CHECK(s.fps == doctest::Approx(1000 / 10.5));
  CHECK(quantile({5, 1, 3, 2, 4}, 0.5) == 3);
  CHECK(quantile({1, 2, 3, 4}, 0.95) == 4);
  CHECK_THROWS_AS(quantile({}, 0.5), Error);
  std::vector<StageTimes> runs{one, StageTimes{{2, 2, 2, 2}, 9}};
  const auto csv = latency_csv(runs);
  CHECK(csv.rfind("run,projection_ms,ground_ms,cluster_ms,network_ms,total_ms\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("reports") {
  const auto kv = seg_report(seg_score(93, 7, 97, 3));
  const auto text = format_kv(kv);
  CHECK(text.find("precision") != std::string::npos);
  const auto path = (std::filesystem::temp_directory_path() / "pcrd_report.txt").string();
  write_text(path, text);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == text);
  std::filesystem::remove(path);
}
