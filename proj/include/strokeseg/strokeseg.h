/* C interface to the stroke lesion segmentation library.
 *
 * Every function returns an sseg_status. On failure the message of the most
 * recent error on the calling thread is available from sseg_last_error().
 * Handles are opaque and must be released with their matching _free call.
 */
#ifndef STROKESEG_H
#define STROKESEG_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SSEG_API __declspec(dllexport)
#else
#define SSEG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sseg_status {
  SSEG_OK = 0,
  SSEG_ERR_INVALID_ARGUMENT = 1,
  SSEG_ERR_CONFIG = 2,
  SSEG_ERR_SHAPE = 3,
  SSEG_ERR_FORMAT = 4,
  SSEG_ERR_IO = 5,
  SSEG_ERR_NUMERIC = 6,
  SSEG_ERR_INCOMPATIBLE = 7,
  SSEG_ERR_INTERNAL = 8
} sseg_status;

typedef struct sseg_config sseg_config;
typedef struct sseg_checkpoint sseg_checkpoint;

/* Receives one human-readable line per training epoch or pipeline step. */
typedef void (*sseg_progress_fn)(const char* message, void* user);

SSEG_API const char* sseg_version(void);
SSEG_API const char* sseg_status_name(sseg_status status);
SSEG_API const char* sseg_last_error(void);
SSEG_API void sseg_string_free(char* text);

/* Run configuration (key=value text, unknown keys rejected). */
SSEG_API sseg_status sseg_config_default(sseg_config** out);
SSEG_API sseg_status sseg_config_parse(const char* text, sseg_config** out);
SSEG_API sseg_status sseg_config_load(const char* path, sseg_config** out);
/* Applies one key=value override, validated like a file line. */
SSEG_API sseg_status sseg_config_set(sseg_config* config, const char* key, const char* value);
/* *out_text must be released with sseg_string_free. */
SSEG_API sseg_status sseg_config_serialize(const sseg_config* config, char** out_text);
SSEG_API void sseg_config_free(sseg_config* config);

typedef struct sseg_phantom_spec {
  int subjects;
  int slices;
  int size;
  uint64_t seed;
  double noise;
} sseg_phantom_spec;

SSEG_API void sseg_phantom_spec_default(sseg_phantom_spec* spec);
SSEG_API sseg_status sseg_phantom_generate(const sseg_phantom_spec* spec, const char* out_dir);

/* Trains one fold (0..2). Writes config.txt, split.txt, train.log,
 * best.ckpt and last.ckpt under out_dir, resuming from last.ckpt. */
SSEG_API sseg_status sseg_train(const sseg_config* config, const char* manifest, int fold, const char* out_dir,
                                sseg_progress_fn progress, void* user);

/* split is "train", "val" or "test". Writes metrics.txt and overlays. */
SSEG_API sseg_status sseg_evaluate(const char* checkpoint, const char* manifest, int fold, const char* split,
                                   const char* out_dir, int write_overlays);

/* All three folds, then report.md, report.csv and fold_means.txt. */
SSEG_API sseg_status sseg_crossval(const sseg_config* config, const char* manifest, const char* out_dir,
                                   sseg_progress_fn progress, void* user);

/* Concatenates report.csv files into one table; either output may be NULL. */
SSEG_API sseg_status sseg_report_merge(const char* const* csv_paths, size_t count, const char* markdown_out,
                                       const char* csv_out);

SSEG_API sseg_status sseg_checkpoint_open(const char* path, sseg_checkpoint** out);
SSEG_API int sseg_checkpoint_epoch(const sseg_checkpoint* ckpt);
SSEG_API int sseg_checkpoint_fold(const sseg_checkpoint* ckpt);
SSEG_API double sseg_checkpoint_best_metric(const sseg_checkpoint* ckpt);
/* Copy of the configuration the checkpoint was trained with. */
SSEG_API sseg_status sseg_checkpoint_config(const sseg_checkpoint* ckpt, sseg_config** out);
SSEG_API void sseg_checkpoint_free(sseg_checkpoint* ckpt);

#ifdef __cplusplus
}
#endif

#endif
