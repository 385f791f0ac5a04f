#ifndef PCRD_H
#define PCRD_H

#include <stddef.h>
#include <stdint.h>

#if defined(PCRD_BUILDING_LIBRARY)
#define PCRD_API __attribute__((visibility("default")))
#else
#define PCRD_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pcrd_status {
  PCRD_OK = 0,
  PCRD_ERR_INVALID_INPUT = 1,
  PCRD_ERR_DOMAIN = 2,
  PCRD_ERR_CONFIG = 3,
  PCRD_ERR_IO = 4,
  PCRD_ERR_RUNTIME = 5,
  PCRD_ERR_NULL_ARGUMENT = 6
} pcrd_status;

typedef struct pcrd_config pcrd_config;
typedef struct pcrd_detector pcrd_detector;
typedef struct pcrd_result pcrd_result;
typedef struct pcrd_report pcrd_report;

/* Message of the last failed call on this thread; "" when none. */
PCRD_API const char* pcrd_last_error(void);
PCRD_API const char* pcrd_version(void);

/* ---- configuration ---- */
PCRD_API pcrd_status pcrd_config_default(pcrd_config** out);
PCRD_API pcrd_status pcrd_config_parse(const char* text, pcrd_config** out);
PCRD_API pcrd_status pcrd_config_load(const char* path, pcrd_config** out);
PCRD_API pcrd_status pcrd_config_set(pcrd_config* cfg, const char* key, const char* value);
/* Copies the value into buf (NUL-terminated, truncated to cap); *needed gets the full length + 1. */
PCRD_API pcrd_status pcrd_config_get(const pcrd_config* cfg, const char* key, char* buf, size_t cap, size_t* needed);
PCRD_API pcrd_status pcrd_config_validate(const pcrd_config* cfg);
PCRD_API pcrd_status pcrd_config_serialize(const pcrd_config* cfg, pcrd_report** out);
PCRD_API pcrd_status pcrd_config_save(const pcrd_config* cfg, const char* path);
PCRD_API void pcrd_config_free(pcrd_config* cfg);

/* ---- detection ---- */
PCRD_API pcrd_status pcrd_detector_load(const pcrd_config* cfg, pcrd_detector** out);
/* Untrained weights drawn from the config seed; for timing and plumbing only. */
PCRD_API pcrd_status pcrd_detector_random(const pcrd_config* cfg, pcrd_detector** out);
PCRD_API pcrd_status pcrd_detector_set_gates(pcrd_detector* det, int classifier_gate, int box_gate);
PCRD_API void pcrd_detector_free(pcrd_detector* det);

typedef struct pcrd_detection {
  int cls; /* 0 car, 1 pedestrian, 2 cyclist */
  double score;
  double center[3];
  double size[3]; /* length, width, height */
  double yaw;
  double class_probs[3];
  double energy_cls;
  double energy_box;
  int cluster_id;
} pcrd_detection;

typedef struct pcrd_scan_stats {
  size_t points, valid, ground, clusters, proposals, gate1, gate2;
  double stage_ms[4]; /* projection, ground, cluster, network */
  double total_ms;
} pcrd_scan_stats;

/* `xyz` holds n points, `stride` floats apart (3 for packed xyz, 4 for KITTI xyzi). */
PCRD_API pcrd_status pcrd_detect(const pcrd_detector* det, const float* xyz, size_t n, size_t stride,
                                 pcrd_result** out);
PCRD_API pcrd_status pcrd_detect_file(const pcrd_detector* det, const char* bin_path, pcrd_result** out);
PCRD_API size_t pcrd_result_count(const pcrd_result* res);
PCRD_API pcrd_status pcrd_result_get(const pcrd_result* res, size_t i, pcrd_detection* out);
PCRD_API pcrd_status pcrd_result_stats(const pcrd_result* res, pcrd_scan_stats* out);
PCRD_API pcrd_status pcrd_result_write_ply(const pcrd_result* res, const char* path);
PCRD_API void pcrd_result_free(pcrd_result* res);

/* ---- commands; each returns a "key = value" report ---- */
PCRD_API const char* pcrd_report_text(const pcrd_report* rep);
/* Secondary payload: detection lines (pcrd_detect_files), latency CSV (pcrd_bench); "" otherwise. */
PCRD_API const char* pcrd_report_body(const pcrd_report* rep);
PCRD_API void pcrd_report_free(pcrd_report* rep);

typedef void (*pcrd_progress_fn)(const char* stage, int epoch, double loss, void* user);

PCRD_API pcrd_status pcrd_synth(const pcrd_config* cfg, uint64_t seed, int frames, int id_per_frame,
                                int ood_per_frame, const char* out_dir, pcrd_report** out);
PCRD_API pcrd_status pcrd_train(const pcrd_config* cfg, const char* out_dir, pcrd_progress_fn progress, void* user,
                                pcrd_report** out);
/* pred_dir may be NULL: predictions then come from the ground stage. */
PCRD_API pcrd_status pcrd_eval_ground(const pcrd_config* cfg, const char* data, const char* pred_dir,
                                      pcrd_report** out);
/* calib_dir NULL selects the synthetic label format; csv_out may be NULL. */
PCRD_API pcrd_status pcrd_eval_detect(const char* detections, const char* labels_dir, const char* calib_dir,
                                      const char* difficulty, const char* csv_out, pcrd_report** out);
/* input NULL benchmarks one synthetic scan; csv_out may be NULL. */
PCRD_API pcrd_status pcrd_bench(const pcrd_config* cfg, const char* input, int repeats, int threads,
                                const char* csv_out, pcrd_report** out);
/* out_path and ply_dir may be NULL; the detection lines are the report body. */
PCRD_API pcrd_status pcrd_detect_files(const pcrd_detector* det, const char* input, int threads,
                                       const char* out_path, const char* ply_dir, pcrd_report** out);

#ifdef __cplusplus
}
#endif

#endif
