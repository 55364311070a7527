#ifndef MSVBX_H
#define MSVBX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. Zero is success.
typedef enum MsvbxStatus {
  MSVBX_STATUS_OK = 0,
  MSVBX_STATUS_NULL_POINTER = 1,
  MSVBX_STATUS_INVALID_ARGUMENT = 2,
  MSVBX_STATUS_IO = 3,
  MSVBX_STATUS_FORMAT = 4,
  MSVBX_STATUS_NUMERICAL = 5,
  MSVBX_STATUS_CONSTRAINT = 6,
  MSVBX_STATUS_INTERNAL = 7,
  MSVBX_STATUS_PANIC = 8,
} MsvbxStatus;

typedef struct MsvbxBackend MsvbxBackend;

typedef struct MsvbxRecording MsvbxRecording;

typedef struct MsvbxResult MsvbxResult;

// Clustering settings; obtain defaults from [`msvbx_config_default`].
typedef struct MsvbxConfig {
  double fa;
  double fb;
  double p_loop;
  double tau;
  uint32_t max_iters;
  double elbo_rel_tol;
  double pi_drop_eps;
  double cahc_threshold;
  double activity_threshold;
  double median_window;
  // 0 for multi-stream inference, 1 for single-stream VBx.
  uint32_t mode;
} MsvbxConfig;

// One speaker turn; `speaker` is the k of `spk<k>`.
typedef struct MsvbxSegment {
  uint32_t speaker;
  double onset;
  double duration;
} MsvbxSegment;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Thread-local message for the last failed call; empty after a success.
// The pointer stays valid until the next call on this thread.
const char *msvbx_last_error_message(void);

struct MsvbxConfig msvbx_config_default(void);

// Reads an MSVB1 recording file; the recording id is the file stem.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum MsvbxStatus msvbx_recording_read(const char *path, struct MsvbxRecording **out);

// Builds a recording from row-major arrays: `activities` holds
// `num_chunks * num_streams * frames_per_chunk` values and `embeddings`
// `num_chunks * num_streams * embed_dim` values.
//
// # Safety
// `recording_id` must be NUL-terminated, the arrays must hold the stated
// number of floats and `out` must be valid.
enum MsvbxStatus msvbx_recording_from_arrays(const char *recording_id,
                                             size_t num_chunks,
                                             size_t num_streams,
                                             size_t embed_dim,
                                             size_t frames_per_chunk,
                                             float frame_step,
                                             const float *activities,
                                             const float *embeddings,
                                             struct MsvbxRecording **out);

// # Safety
// `rec` must come from this library and not be used afterwards.
void msvbx_recording_free(struct MsvbxRecording *rec);

// Number of chunks, or 0 for a null handle.
//
// # Safety
// `rec` must be null or a live handle.
size_t msvbx_recording_num_chunks(const struct MsvbxRecording *rec);

// Loads a trained backend model (JSON).
//
// # Safety
// `path` must be NUL-terminated and `out` valid.
enum MsvbxStatus msvbx_backend_load(const char *path, struct MsvbxBackend **out);

// # Safety
// `backend` must come from this library and not be used afterwards.
void msvbx_backend_free(struct MsvbxBackend *backend);

// Output dimension of the backend, or 0 for a null handle.
//
// # Safety
// `backend` must be null or a live handle.
size_t msvbx_backend_dim(const struct MsvbxBackend *backend);

// Clusters one recording. A null `config` means defaults.
//
// # Safety
// Handles must be live; `config` null or valid; `out` valid.
enum MsvbxStatus msvbx_cluster(const struct MsvbxRecording *rec,
                               const struct MsvbxBackend *backend,
                               const struct MsvbxConfig *config,
                               struct MsvbxResult **out);

// # Safety
// `res` must come from this library and not be used afterwards.
void msvbx_result_free(struct MsvbxResult *res);

// # Safety
// `res` must be null or a live handle.
size_t msvbx_result_num_speakers(const struct MsvbxResult *res);

// # Safety
// `res` must be null or a live handle.
size_t msvbx_result_num_segments(const struct MsvbxResult *res);

// Copies segment `index` (onset order) into `out`.
//
// # Safety
// `res` must be a live handle and `out` valid.
enum MsvbxStatus msvbx_result_segment(const struct MsvbxResult *res,
                                      size_t index,
                                      struct MsvbxSegment *out);

// Number of VB iterations that were run.
//
// # Safety
// `res` must be null or a live handle.
size_t msvbx_result_num_iterations(const struct MsvbxResult *res);

// ELBO after iteration `iter`.
//
// # Safety
// `res` must be a live handle and `out` valid.
enum MsvbxStatus msvbx_result_elbo(const struct MsvbxResult *res, size_t iter, double *out);

// Writes the result as RTTM.
//
// # Safety
// `res` must be a live handle and `path` NUL-terminated.
enum MsvbxStatus msvbx_result_write_rttm(const struct MsvbxResult *res, const char *path);

// Static name of a status code.
const char *msvbx_status_name(enum MsvbxStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MSVBX_H */
