#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pcrd/config.hpp"
#include "pcrd/evaluation.hpp"
#include "pcrd/pipeline.hpp"

namespace pcrd {

/// Sorted .bin files: a directory, a single file, or a pattern with '*'/'?' in the file name.
std::vector<std::string> expand_inputs(const std::string& pattern);

struct SynthOptions {
  int frames = 4;
  int id_per_frame = 6;
  int ood_per_frame = 4;
};

/// Writes frame_NNNNNN.{bin,label,txt} plus manifest.kv. Byte-identical for equal
/// (config, seed, options).
KeyValues synth_write(const PipelineConfig& cfg, std::uint64_t seed, const SynthOptions& opt,
                      const std::string& out_dir);

/// A rendered synthetic frame kept in memory.
struct SynthFrame {
  PointList points;
  std::vector<std::uint8_t> ground;  // per point
  std::vector<std::pair<ObjectClass, Box3>> boxes;
};
SynthFrame synth_frame(const PipelineConfig& cfg, std::uint64_t seed, int n_id, int n_ood);

using ProgressFn = std::function<void(const std::string& stage, int epoch, double loss)>;

struct TrainOutcome {
  ClassifierParams<double> classifier;
  BoxParams<double> box;
  EnergyConfig energy;      // calibrated thresholds
  KeyValues report;
};

/// Calibration rate of each gate; the pair passes at least 95% of ID proposals.
inline constexpr double kGateCalibrationRate = 0.975;

/// Trains both networks on cfg.synth_id + cfg.synth_ood synthetic proposals and calibrates
/// the gates on ID proposals that the front end extracts from separate rendered scenes.
TrainOutcome train_networks(const PipelineConfig& cfg, const ProgressFn& progress = {});

/// train_networks, then writes classifier.pcrd, box.pcrd, detect.cfg and train.meta.
KeyValues train_run(const PipelineConfig& cfg, const std::string& out_dir, const ProgressFn& progress = {});

/// Every frame_*.bin / *.bin under `data` with a sibling .label; predictions come from
/// `pred_dir/<stem>.label` when given, else from the ground stage.
KeyValues eval_ground(const PipelineConfig& cfg, const std::string& data, const std::string& pred_dir = {});

struct EvalDetectOptions {
  std::string detections;  // detection lines
  std::string labels;      // directory of <frame>.txt
  std::string calib;       // KITTI calib directory; empty selects the synthetic label format
  std::string difficulty = "moderate";
  std::string csv_out;
};
KeyValues eval_detect(const EvalDetectOptions& opt);

struct BenchOptions {
  std::string input;  // empty: one synthetic scan
  int repeats = 20;
  int threads = 1;    // > 1 adds a batch-throughput figure; the headline stays single-threaded
  std::string csv_out;
};
/// Without configured weights the networks are randomly initialised from cfg.seed.
KeyValues bench(const PipelineConfig& cfg, const BenchOptions& opt, std::string* csv = nullptr);

struct DetectOptions {
  std::string input;
  int threads = 1;
  std::string out;      // detection lines; empty returns them in the report only
  std::string ply_dir;  // one <stem>.ply per scan when set
};
KeyValues detect_files(const Detector& det, const DetectOptions& opt, std::vector<std::string>* lines = nullptr);

/// Detector with He-initialised weights; used when no trained weights are available.
Detector random_detector(const PipelineConfig& cfg);

}  // namespace pcrd
