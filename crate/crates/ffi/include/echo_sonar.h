#ifndef ECHO_SONAR_H
#define ECHO_SONAR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define ES_OK 0

#define ES_ERR_NULL -1

#define ES_ERR_CONFIG -2

#define ES_ERR_SHAPE -3

#define ES_ERR_INPUT -4

#define ES_ERR_ANCHOR -5

#define ES_ERR_NUMERIC -6

#define ES_ERR_POSE -7

#define ES_ERR_FORMAT -8

#define ES_ERR_IO -9

#define ES_ERR_PANIC -10

/**
 * A trained regressor.
 */
typedef struct EsModel EsModel;

/**
 * Chirp parameters plus preprocessing settings.
 */
typedef struct EsPipeline EsPipeline;

/**
 * Subtracted range profiles of one recording.
 */
typedef struct EsProfiles EsProfiles;

/**
 * Chirp and acoustic parameters.
 */
typedef struct EsChirpSpec {
  double start_freq_hz;
  double bandwidth_hz;
  size_t chirp_len_samples;
  uint32_t sample_rate_hz;
  double amplitude;
  double sound_speed_mps;
} EsChirpSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *es_version(void);

/**
 * Copy the calling thread's last error message into `buf` (truncated,
 * always NUL-terminated). Returns the full message length in bytes, or 0
 * when there is none.
 *
 * # Safety
 * `buf` must be NULL or valid for `len` writes.
 */
size_t es_last_error_message(char *buf, size_t len);

/**
 * The default chirp (17 kHz start, 3 kHz sweep, 512 samples at 48 kHz).
 */
struct EsChirpSpec es_chirp_spec_default(void);

/**
 * Write one chirp period into `out` (`len` must equal the chirp length).
 *
 * # Safety
 * `spec` must be valid; `out` valid for `len` writes.
 */
int32_t es_chirp_generate(const struct EsChirpSpec *spec, double *out, size_t len);

/**
 * Create a pipeline with default preprocessing settings.
 *
 * # Safety
 * `spec` must be valid; `out` valid for one write.
 */
int32_t es_pipeline_new(const struct EsChirpSpec *spec, struct EsPipeline **out);

/**
 * # Safety
 * `p` must be NULL or a pipeline from `es_pipeline_new` not yet freed.
 */
void es_pipeline_free(struct EsPipeline *p);

/**
 * Range-profile a recording of `channels` channels x `frames` samples,
 * interleaved (`samples[frame * channels + channel]`).
 *
 * # Safety
 * `pipeline` must be valid; `samples` valid for `channels * frames` reads;
 * `out` valid for one write.
 */
int32_t es_preprocess(const struct EsPipeline *pipeline,
                      const float *samples,
                      size_t channels,
                      size_t frames,
                      struct EsProfiles **out);

/**
 * # Safety
 * `p` must be NULL or a handle from `es_preprocess` not yet freed.
 */
void es_profiles_free(struct EsProfiles *p);

/**
 * Number of subtracted profiles, channels and cells.
 *
 * # Safety
 * `p` must be valid; each out-pointer NULL or valid for one write.
 */
int32_t es_profiles_shape(const struct EsProfiles *p,
                          size_t *count,
                          size_t *channels,
                          size_t *cells);

/**
 * Copy subtracted profile `index` (channel-major, `channels * cells`
 * values) into `out`.
 *
 * # Safety
 * `p` must be valid; `out` valid for `len` writes.
 */
int32_t es_profiles_copy(const struct EsProfiles *p, size_t index, float *out, size_t len);

/**
 * Direct-path anchor cell of `channel`.
 *
 * # Safety
 * `p` must be valid; `out` valid for one write.
 */
int32_t es_profiles_anchor(const struct EsProfiles *p, size_t channel, size_t *out);

/**
 * Copy the 50-profile feature window starting at profile `start` into
 * `out` (`channels * cells * 50` values, layout channel, cell, profile).
 *
 * # Safety
 * `p` must be valid; `out` valid for `len` writes.
 */
int32_t es_profiles_window(const struct EsProfiles *p, size_t start, float *out, size_t len);

/**
 * Load a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` valid for one write.
 */
int32_t es_model_load(const char *path, struct EsModel **out);

/**
 * # Safety
 * `m` must be NULL or a handle from `es_model_load` not yet freed.
 */
void es_model_free(struct EsModel *m);

/**
 * Values in one input window the model expects.
 *
 * # Safety
 * `m` must be valid; `out` valid for one write.
 */
int32_t es_model_input_len(const struct EsModel *m, size_t *out);

/**
 * Predict a pose (63 doubles) from one feature window.
 *
 * # Safety
 * `m` must be valid; `window` valid for `len` reads; `pose_out` valid for
 * 63 writes.
 */
int32_t es_model_predict(const struct EsModel *m,
                         const float *window,
                         size_t len,
                         double *pose_out);

/**
 * The 19 bone flexion angles in degrees.
 *
 * # Safety
 * `pose` valid for 63 reads; `out` valid for 19 writes.
 */
int32_t es_flexion_angles(const double *pose, double *out);

/**
 * Negative mean absolute error between the palm-normalised poses.
 *
 * # Safety
 * `pose` and `template_pose` valid for 63 reads; `out` valid for one write.
 */
int32_t es_activation_similarity(const double *pose, const double *template_pose, double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* ECHO_SONAR_H */
