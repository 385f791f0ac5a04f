#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "pcrd/pcrd.h"

namespace {

int exit_code(pcrd_status s) {
  if (s == PCRD_OK) return 0;
  return s == PCRD_ERR_CONFIG ? 2 : 1;
}

int report_failure(pcrd_status s) {
  std::cerr << "error: " << pcrd_last_error() << "\n";
  return exit_code(s);
}

struct ConfigHandle {
  pcrd_config* ptr = nullptr;
  ~ConfigHandle() { pcrd_config_free(ptr); }
};

struct ReportHandle {
  pcrd_report* ptr = nullptr;
  ~ReportHandle() { pcrd_report_free(ptr); }
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

pcrd_status load_config(const Common& c, ConfigHandle& cfg) {
  const pcrd_status s = c.config.empty() ? pcrd_config_default(&cfg.ptr) : pcrd_config_load(c.config.c_str(), &cfg.ptr);
  if (s != PCRD_OK || !c.seed) return s;
  return pcrd_config_set(cfg.ptr, "seed", std::to_string(*c.seed).c_str());
}

void progress(const char* stage, int epoch, double loss, void*) {
  std::fprintf(stderr, "[%s] epoch %d loss %.6f\n", stage, epoch, loss);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LiDAR road-user detection: ground segmentation, depth clustering, energy-gated point networks"};
  app.require_subcommand(1);
  app.fallthrough();

  Common common;
  app.add_option("--config", common.config, "Configuration file (key = value)");
  app.add_option("--seed", common.seed, "Seed for every random choice");
  app.add_option("--threads", common.threads, "Worker threads")->check(CLI::PositiveNumber);

  std::string input, out, ply_dir;
  auto* detect = app.add_subcommand("detect", "Detect objects in KITTI .bin scans");
  detect->add_option("input", input, "Scan file, directory or glob")->required();
  detect->add_option("--out", out, "Detection output file (default stdout)");
  detect->add_option("--dump-ply", ply_dir, "Directory for colored PLY dumps");

  std::optional<int> epochs;
  std::optional<std::string> lr, lambda;
  bool no_pvle = false;
  auto* train = app.add_subcommand("train", "Train both networks on synthetic proposals");
  train->add_option("--out", out, "Output directory for weights and detect.cfg")->required();
  train->add_option("--epochs", epochs, "Training epochs");
  train->add_option("--lr", lr, "Adam learning rate");
  train->add_option("--lambda", lambda, "Energy-loss weight");
  train->add_flag("--no-pvle", no_pvle, "Disable the proposal voxel location encoding");

  std::string data, pred;
  auto* eval_ground = app.add_subcommand("eval-ground", "Ground segmentation metrics against .label files");
  eval_ground->add_option("data", data, "Directory or glob of scans with sibling .label files")->required();
  eval_ground->add_option("--pred", pred, "Directory of predicted .label files");

  std::string dets, labels, calib, difficulty = "moderate";
  auto* eval_detect = app.add_subcommand("eval-detect", "11- and 40-point AP of detection lines");
  eval_detect->add_option("detections", dets, "Detection lines file")->required();
  eval_detect->add_option("--labels", labels, "Directory of per-frame label files")->required();
  eval_detect->add_option("--calib", calib, "KITTI calib directory (selects KITTI label format)");
  eval_detect->add_option("--difficulty", difficulty, "easy, moderate or hard")
      ->check(CLI::IsMember({"easy", "moderate", "hard"}));
  eval_detect->add_option("--out", out, "CSV output");

  int repeats = 20;
  auto* bench = app.add_subcommand("bench", "Per-stage latency, single-threaded headline");
  bench->add_option("--input", input, "Scan file, directory or glob (default: synthetic scan)");
  bench->add_option("--repeats", repeats, "Timed passes per scan")->check(CLI::PositiveNumber);
  bench->add_option("--out", out, "Latency CSV output");

  int frames = 4, n_id = 6, n_ood = 4;
  auto* synth = app.add_subcommand("synth", "Write a synthetic scan dataset");
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--frames", frames, "Number of scans")->check(CLI::PositiveNumber);
  synth->add_option("--id", n_id, "Road users per scan")->check(CLI::NonNegativeNumber);
  synth->add_option("--ood", n_ood, "Clutter objects per scan")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 2;
  }

  ConfigHandle cfg;
  ReportHandle rep;
  pcrd_status s = load_config(common, cfg);
  if (s != PCRD_OK) return report_failure(s);

  if (*detect) {
    pcrd_detector* det = nullptr;
    s = pcrd_detector_load(cfg.ptr, &det);
    if (s != PCRD_OK) return report_failure(s);
    s = pcrd_detect_files(det, input.c_str(), common.threads, out.empty() ? nullptr : out.c_str(),
                          ply_dir.empty() ? nullptr : ply_dir.c_str(), &rep.ptr);
    pcrd_detector_free(det);
    if (s != PCRD_OK) return report_failure(s);
    if (out.empty()) std::cout << pcrd_report_body(rep.ptr);
    std::cerr << pcrd_report_text(rep.ptr);
    return 0;
  }

  if (*train) {
    if (epochs) s = pcrd_config_set(cfg.ptr, "train.epochs", std::to_string(*epochs).c_str());
    if (s == PCRD_OK && lr) s = pcrd_config_set(cfg.ptr, "train.lr", lr->c_str());
    if (s == PCRD_OK && lambda) s = pcrd_config_set(cfg.ptr, "train.lambda", lambda->c_str());
    if (s == PCRD_OK && no_pvle) s = pcrd_config_set(cfg.ptr, "train.use_pvle", "false");
    if (s == PCRD_OK) s = pcrd_config_validate(cfg.ptr);
    if (s == PCRD_OK) s = pcrd_train(cfg.ptr, out.c_str(), progress, nullptr, &rep.ptr);
  } else if (*eval_ground) {
    s = pcrd_eval_ground(cfg.ptr, data.c_str(), pred.empty() ? nullptr : pred.c_str(), &rep.ptr);
  } else if (*eval_detect) {
    s = pcrd_eval_detect(dets.c_str(), labels.c_str(), calib.empty() ? nullptr : calib.c_str(), difficulty.c_str(),
                         out.empty() ? nullptr : out.c_str(), &rep.ptr);
  } else if (*bench) {
    s = pcrd_bench(cfg.ptr, input.empty() ? nullptr : input.c_str(), repeats, common.threads,
                   out.empty() ? nullptr : out.c_str(), &rep.ptr);
  } else if (*synth) {
    char buf[32];
    s = pcrd_config_get(cfg.ptr, "seed", buf, sizeof buf, nullptr);
    if (s == PCRD_OK) s = pcrd_synth(cfg.ptr, std::stoull(buf), frames, n_id, n_ood, out.c_str(), &rep.ptr);
  }
  if (s != PCRD_OK) return report_failure(s);
  if (*bench && out.empty()) {
    std::cout << pcrd_report_body(rep.ptr);
    std::cerr << pcrd_report_text(rep.ptr);
  } else {
    std::cout << pcrd_report_text(rep.ptr);
  }
  return 0;
}
