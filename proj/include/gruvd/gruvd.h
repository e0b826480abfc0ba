/* Copyright 2026 The gruvd Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to libgruvd. Every function returns a gruvd_status; on failure
 * gruvd_last_error() describes the problem (thread-local, valid until the
 * next call on the same thread). Strings returned through char** are owned
 * by the caller and released with gruvd_string_free.
 *
 * Config arguments are JSON documents; NULL or "" means defaults. Sequences
 * are float32 [T,C,H,W] in [0,1].
 */
#ifndef GRUVD_GRUVD_H_
#define GRUVD_GRUVD_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(GRUVD_BUILDING_LIBRARY)
#define GRUVD_API __declspec(dllexport)
#else
#define GRUVD_API __declspec(dllimport)
#endif
#else
#define GRUVD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gruvd_status {
  GRUVD_OK = 0,
  GRUVD_ERR_INTERNAL = 1,
  GRUVD_ERR_CONFIG = 2, /* invalid configuration or argument */
  GRUVD_ERR_IO = 3,     /* missing, unreadable or malformed file */
  GRUVD_ERR_NUMERIC = 4, /* non-finite loss, failed gradient check */
  GRUVD_ERR_SHAPE = 5,
  GRUVD_ERR_USAGE = 6 /* NULL handle, wrong call order */
} gruvd_status;

typedef struct gruvd_model gruvd_model;
typedef struct gruvd_sequence gruvd_sequence;

GRUVD_API const char* gruvd_version(void);
GRUVD_API const char* gruvd_last_error(void);
GRUVD_API void gruvd_string_free(char* s);
/* Caps worker threads; n <= 0 restores the default. */
GRUVD_API void gruvd_set_threads(int n);

/* ---- sequences ---------------------------------------------------------- */

/* Copies `data` (may be NULL for zeros). */
GRUVD_API gruvd_status gruvd_sequence_create(size_t frames, size_t channels, size_t height,
                                             size_t width, const float* data,
                                             gruvd_sequence** out);
GRUVD_API gruvd_status gruvd_sequence_read(const char* path, gruvd_sequence** out);
GRUVD_API gruvd_status gruvd_sequence_write(const gruvd_sequence* seq, const char* path);
/* dims receives T, C, H, W. */
GRUVD_API gruvd_status gruvd_sequence_shape(const gruvd_sequence* seq, size_t dims[4]);
/* Copies up to `capacity` values into `out`. */
GRUVD_API gruvd_status gruvd_sequence_data(const gruvd_sequence* seq, float* out,
                                           size_t capacity);
/* Writes frame t as PGM/PPM with 8 or 16 bits per sample. */
GRUVD_API gruvd_status gruvd_sequence_write_frame(const gruvd_sequence* seq, size_t t,
                                                  const char* path, int bits);
GRUVD_API void gruvd_sequence_free(gruvd_sequence* seq);

/* ---- noise -------------------------------------------------------------- */

/* Noise parameters for an ISO; profile_json NULL selects the built-in profile. */
GRUVD_API gruvd_status gruvd_profile_lookup(const char* profile_json, int iso, double* a,
                                            double* b);
/* Heteroscedastic Gaussian noise with variance a*y + b. */
GRUVD_API gruvd_status gruvd_noise(const gruvd_sequence* clean, double a, double b,
                                   uint64_t seed, int clip, gruvd_sequence** out);

/* ---- datasets ----------------------------------------------------------- */

/* manifest_json: {"profile": ..., "sequences": [{"scene": ..., "iso", "seed"}]}.
 * Writes the sequences and out_dir/manifest.json. */
GRUVD_API gruvd_status gruvd_synth(const char* manifest_json, const char* out_dir);

/* ---- models ------------------------------------------------------------- */

GRUVD_API gruvd_status gruvd_model_create(const char* model_config_json, uint64_t seed,
                                          gruvd_model** out);
/* Loads a checkpoint directory. */
GRUVD_API gruvd_status gruvd_model_load(const char* dir, gruvd_model** out);
GRUVD_API gruvd_status gruvd_model_save(const gruvd_model* model, const char* dir);
GRUVD_API gruvd_status gruvd_model_info(const gruvd_model* model, char** json_out);
GRUVD_API void gruvd_model_free(gruvd_model* model);

/* Denoises a noisy sequence with noise parameters (a, b). Any of the output
 * pointers may be NULL; y is the fused output, s the candidate, r and f the
 * gate maps. spatial_only restarts the recurrence at every frame. */
GRUVD_API gruvd_status gruvd_denoise(const gruvd_model* model, const gruvd_sequence* noisy,
                                     double a, double b, int spatial_only, gruvd_sequence** y,
                                     gruvd_sequence** s, gruvd_sequence** r,
                                     gruvd_sequence** f);

/* ---- training ----------------------------------------------------------- */

typedef struct gruvd_epoch_info {
  int64_t epoch;
  double loss;
  double loss_fusion;
  double loss_init;
  double lr;
  double seconds;
} gruvd_epoch_info;

/* Return nonzero to stop training after the current epoch. */
typedef int (*gruvd_epoch_callback)(const gruvd_epoch_info* info, void* user);

/* Trains on the sequences of a dataset manifest. checkpoint_dir receives the
 * checkpoint and train_log.csv. With resume != 0 training continues from the
 * checkpoint already in checkpoint_dir. */
GRUVD_API gruvd_status gruvd_train(const char* manifest_path, const char* model_config_json,
                                   const char* train_config_json, uint64_t model_seed,
                                   const char* checkpoint_dir, int resume,
                                   gruvd_epoch_callback callback, void* user);

/* ---- evaluation --------------------------------------------------------- */

/* variants: comma-separated subset of noisy,s_only,fused,gru_baseline,
 * spatial_only ("noisy" is always reported). baseline may be NULL unless
 * gru_baseline is requested. csv_out/table_out/frames_csv_out may be NULL. */
GRUVD_API gruvd_status gruvd_evaluate(const gruvd_model* model, const gruvd_model* baseline,
                                      const char* manifest_path, const char* variants,
                                      double peak, char** csv_out, char** table_out,
                                      char** frames_csv_out);

/* Image metrics on two sequences of equal shape (averaged over frames). */
GRUVD_API gruvd_status gruvd_metrics(const gruvd_sequence* a, const gruvd_sequence* b,
                                     double peak, double* psnr_db, double* ssim);

/* ---- verification ------------------------------------------------------- */

/* Runs the finite-difference gradient check. Returns GRUVD_ERR_NUMERIC when
 * any parameter exceeds the tolerance; the report is filled either way. */
GRUVD_API gruvd_status gruvd_gradcheck(const char* config_json, double* max_rel_error,
                                       char** report_out);

#ifdef __cplusplus
}
#endif

#endif /* GRUVD_GRUVD_H_ */
