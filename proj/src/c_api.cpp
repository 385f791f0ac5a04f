#include "pcrd/pcrd.h"

#include <cstring>
#include <new>
#include <string>

#include "pcrd/commands.hpp"
#include "pcrd/config.hpp"
#include "pcrd/pipeline.hpp"

struct pcrd_config {
  pcrd::PipelineConfig cfg;
};

struct pcrd_detector {
  pcrd::Detector det;
};

struct pcrd_result {
  pcrd::ScanResult result;
  pcrd::ScanArtifacts artifacts;
};

struct pcrd_report {
  std::string text;
  std::string body;
};

namespace {

thread_local std::string g_last_error;

pcrd_status to_status(pcrd::ErrorCode c) {
  switch (c) {
    case pcrd::ErrorCode::kInvalidInput: return PCRD_ERR_INVALID_INPUT;
    case pcrd::ErrorCode::kDomain: return PCRD_ERR_DOMAIN;
    case pcrd::ErrorCode::kConfig: return PCRD_ERR_CONFIG;
    case pcrd::ErrorCode::kIo: return PCRD_ERR_IO;
    case pcrd::ErrorCode::kRuntime: return PCRD_ERR_RUNTIME;
  }
  return PCRD_ERR_RUNTIME;
}

template <typename F>
pcrd_status guard(F&& f) {
  try {
    g_last_error.clear();
    f();
    return PCRD_OK;
  } catch (const pcrd::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return PCRD_ERR_RUNTIME;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PCRD_ERR_RUNTIME;
  }
}

pcrd_status null_arg(const char* what) {
  g_last_error = std::string("null argument: ") + what;
  return PCRD_ERR_NULL_ARGUMENT;
}

std::string opt(const char* s) { return s ? s : ""; }

pcrd_status make_report(pcrd_report** out, pcrd::KeyValues kv, std::string body = {}) {
  *out = new pcrd_report{pcrd::format_kv(kv), std::move(body)};
  return PCRD_OK;
}

}  // namespace

extern "C" {

const char* pcrd_last_error(void) { return g_last_error.c_str(); }
const char* pcrd_version(void) { return "1.0.0"; }

pcrd_status pcrd_config_default(pcrd_config** out) {
  if (!out) return null_arg("out");
  return guard([&] { *out = new pcrd_config{}; });
}

pcrd_status pcrd_config_parse(const char* text, pcrd_config** out) {
  if (!text || !out) return null_arg("text/out");
  return guard([&] { *out = new pcrd_config{pcrd::PipelineConfig::parse(text)}; });
}

pcrd_status pcrd_config_load(const char* path, pcrd_config** out) {
  if (!path || !out) return null_arg("path/out");
  return guard([&] { *out = new pcrd_config{pcrd::PipelineConfig::load(path)}; });
}

pcrd_status pcrd_config_set(pcrd_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return null_arg("cfg/key/value");
  return guard([&] { cfg->cfg.set(key, value); });
}

pcrd_status pcrd_config_get(const pcrd_config* cfg, const char* key, char* buf, size_t cap, size_t* needed) {
  if (!cfg || !key) return null_arg("cfg/key");
  return guard([&] {
    const std::string v = cfg->cfg.get(key);
    if (needed) *needed = v.size() + 1;
    if (buf && cap > 0) {
      const std::size_t n = std::min(cap - 1, v.size());
      std::memcpy(buf, v.data(), n);
      buf[n] = '\0';
    }
  });
}

pcrd_status pcrd_config_validate(const pcrd_config* cfg) {
  if (!cfg) return null_arg("cfg");
  return guard([&] { cfg->cfg.validate(); });
}

pcrd_status pcrd_config_serialize(const pcrd_config* cfg, pcrd_report** out) {
  if (!cfg || !out) return null_arg("cfg/out");
  return guard([&] { *out = new pcrd_report{cfg->cfg.serialize(), {}}; });
}

pcrd_status pcrd_config_save(const pcrd_config* cfg, const char* path) {
  if (!cfg || !path) return null_arg("cfg/path");
  return guard([&] { cfg->cfg.save(path); });
}

void pcrd_config_free(pcrd_config* cfg) { delete cfg; }

pcrd_status pcrd_detector_load(const pcrd_config* cfg, pcrd_detector** out) {
  if (!cfg || !out) return null_arg("cfg/out");
  return guard([&] { *out = new pcrd_detector{pcrd::Detector::load(cfg->cfg)}; });
}

pcrd_status pcrd_detector_random(const pcrd_config* cfg, pcrd_detector** out) {
  if (!cfg || !out) return null_arg("cfg/out");
  return guard([&] { *out = new pcrd_detector{pcrd::random_detector(cfg->cfg)}; });
}

pcrd_status pcrd_detector_set_gates(pcrd_detector* det, int classifier_gate, int box_gate) {
  if (!det) return null_arg("det");
  det->det.gate_classifier = classifier_gate != 0;
  det->det.gate_box = box_gate != 0;
  return PCRD_OK;
}

void pcrd_detector_free(pcrd_detector* det) { delete det; }

pcrd_status pcrd_detect(const pcrd_detector* det, const float* xyz, size_t n, size_t stride, pcrd_result** out) {
  if (!det || !out || (!xyz && n > 0)) return null_arg("det/xyz/out");
  if (stride < 3) {
    g_last_error = "stride must be >= 3";
    return PCRD_ERR_INVALID_INPUT;
  }
  return guard([&] {
    pcrd::PointList pts(n);
    for (size_t i = 0; i < n; ++i) pts[i] = pcrd::Point(xyz[i * stride], xyz[i * stride + 1], xyz[i * stride + 2]);
    auto* r = new pcrd_result{};
    r->result = pcrd::detect_scan(det->det, pts, &r->artifacts);
    *out = r;
  });
}

pcrd_status pcrd_detect_file(const pcrd_detector* det, const char* bin_path, pcrd_result** out) {
  if (!det || !bin_path || !out) return null_arg("det/path/out");
  return guard([&] {
    const auto pts = pcrd::read_kitti_bin(bin_path);
    auto* r = new pcrd_result{};
    r->result = pcrd::detect_scan(det->det, pts, &r->artifacts);
    *out = r;
  });
}

size_t pcrd_result_count(const pcrd_result* res) { return res ? res->result.detections.size() : 0; }

pcrd_status pcrd_result_get(const pcrd_result* res, size_t i, pcrd_detection* out) {
  if (!res || !out) return null_arg("res/out");
  if (i >= res->result.detections.size()) {
    g_last_error = "detection index out of range";
    return PCRD_ERR_INVALID_INPUT;
  }
  const pcrd::Detection& d = res->result.detections[i];
  out->cls = static_cast<int>(d.cls);
  out->score = d.score();
  for (int k = 0; k < 3; ++k) {
    out->center[k] = d.box.center[k];
    out->size[k] = d.box.size[k];
    out->class_probs[k] = d.class_probs[static_cast<std::size_t>(k)];
  }
  out->yaw = d.box.yaw;
  out->energy_cls = d.energy_cls;
  out->energy_box = d.energy_box;
  out->cluster_id = d.cluster_id;
  return PCRD_OK;
}

pcrd_status pcrd_result_stats(const pcrd_result* res, pcrd_scan_stats* out) {
  if (!res || !out) return null_arg("res/out");
  const auto& c = res->result.counts;
  *out = pcrd_scan_stats{c.points, c.valid, c.ground, c.clusters, c.proposals, c.gate1, c.gate2, {}, 0};
  for (int k = 0; k < 4; ++k) out->stage_ms[k] = res->result.times.stage_ms[static_cast<std::size_t>(k)];
  out->total_ms = res->result.times.total_ms;
  return PCRD_OK;
}

pcrd_status pcrd_result_write_ply(const pcrd_result* res, const char* path) {
  if (!res || !path) return null_arg("res/path");
  return guard([&] { pcrd::write_ply(path, res->artifacts, res->result.detections); });
}

void pcrd_result_free(pcrd_result* res) { delete res; }

const char* pcrd_report_text(const pcrd_report* rep) { return rep ? rep->text.c_str() : ""; }
const char* pcrd_report_body(const pcrd_report* rep) { return rep ? rep->body.c_str() : ""; }
void pcrd_report_free(pcrd_report* rep) { delete rep; }

pcrd_status pcrd_synth(const pcrd_config* cfg, uint64_t seed, int frames, int id_per_frame, int ood_per_frame,
                       const char* out_dir, pcrd_report** out) {
  if (!cfg || !out_dir || !out) return null_arg("cfg/out_dir/out");
  return guard([&] {
    make_report(out, pcrd::synth_write(cfg->cfg, seed, {frames, id_per_frame, ood_per_frame}, out_dir));
  });
}

pcrd_status pcrd_train(const pcrd_config* cfg, const char* out_dir, pcrd_progress_fn progress, void* user,
                       pcrd_report** out) {
  if (!cfg || !out_dir || !out) return null_arg("cfg/out_dir/out");
  return guard([&] {
    pcrd::ProgressFn fn;
    if (progress) fn = [&](const std::string& stage, int epoch, double loss) { progress(stage.c_str(), epoch, loss, user); };
    make_report(out, pcrd::train_run(cfg->cfg, out_dir, fn));
  });
}

pcrd_status pcrd_eval_ground(const pcrd_config* cfg, const char* data, const char* pred_dir, pcrd_report** out) {
  if (!cfg || !data || !out) return null_arg("cfg/data/out");
  return guard([&] { make_report(out, pcrd::eval_ground(cfg->cfg, data, opt(pred_dir))); });
}

pcrd_status pcrd_eval_detect(const char* detections, const char* labels_dir, const char* calib_dir,
                             const char* difficulty, const char* csv_out, pcrd_report** out) {
  if (!detections || !labels_dir || !out) return null_arg("detections/labels_dir/out");
  return guard([&] {
    pcrd::EvalDetectOptions o;
    o.detections = detections;
    o.labels = labels_dir;
    o.calib = opt(calib_dir);
    if (difficulty) o.difficulty = difficulty;
    o.csv_out = opt(csv_out);
    make_report(out, pcrd::eval_detect(o));
  });
}

pcrd_status pcrd_bench(const pcrd_config* cfg, const char* input, int repeats, int threads, const char* csv_out,
                       pcrd_report** out) {
  if (!cfg || !out) return null_arg("cfg/out");
  return guard([&] {
    std::string csv;
    const auto kv = pcrd::bench(cfg->cfg, {opt(input), repeats, threads, opt(csv_out)}, &csv);
    make_report(out, kv, std::move(csv));
  });
}

pcrd_status pcrd_detect_files(const pcrd_detector* det, const char* input, int threads, const char* out_path,
                              const char* ply_dir, pcrd_report** out) {
  if (!det || !input || !out) return null_arg("det/input/out");
  return guard([&] {
    std::vector<std::string> lines;
    const auto kv = pcrd::detect_files(det->det, {input, threads, opt(out_path), opt(ply_dir)}, &lines);
    std::string body;
    for (const auto& l : lines) body += l + "\n";
    make_report(out, kv, std::move(body));
  });
}

}  // extern "C"
