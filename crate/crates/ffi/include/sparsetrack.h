#ifndef SPARSETRACK_H
#define SPARSETRACK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum StStatus {
  ST_STATUS_OK = 0,
  ST_STATUS_NULL_POINTER = 1,
  ST_STATUS_INVALID_ARGUMENT = 2,
  ST_STATUS_INVALID_INPUT = 3,
  ST_STATUS_INFEASIBLE = 4,
  ST_STATUS_NUMERICAL = 5,
  ST_STATUS_SEQUENCING = 6,
  ST_STATUS_CAMERA = 7,
  ST_STATUS_CONFIG = 8,
  ST_STATUS_IO = 9,
  ST_STATUS_PARSE = 10,
  ST_STATUS_BUFFER_TOO_SMALL = 11,
  ST_STATUS_PANIC = 12,
} StStatus;

typedef enum StVisibility {
  ST_VISIBILITY_VISIBLE = 0,
  ST_VISIBILITY_PARTIALLY_VISIBLE = 1,
  ST_VISIBILITY_BEHIND_CAMERA = 2,
  ST_VISIBILITY_OUT_OF_FRAME = 3,
} StVisibility;

/**
 * Opaque camera rig handle.
 */
typedef struct StRig StRig;

/**
 * Opaque tracker handle.
 */
typedef struct StTracker StTracker;

/**
 * One detection. Feature pointers may be null when the length is 0.
 */
typedef struct StDetection {
  double bbox[10];
  uint32_t class_id;
  double score;
  const double *roi_feature;
  size_t roi_len;
  const double *query_feature;
  size_t query_len;
} StDetection;

typedef struct StTrack {
  uint64_t track_id;
  double bbox[10];
  uint32_t class_id;
  double score;
} StTrack;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *st_last_error(void);

/**
 * Creates a tracker. `mode` is one of `de`, `pr`, `pr+r`, `pr+h`;
 * `config_toml` may be null for defaults.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum StStatus st_tracker_new(const char *mode, const char *config_toml, struct StTracker **out);

/**
 * # Safety
 * `t` must come from `st_tracker_new` and not be used afterwards.
 */
void st_tracker_free(struct StTracker *t);

/**
 * Feeds one frame. Up to `capacity` reported tracks are copied to `out` and
 * their total count to `n_out`; when `capacity` is too small the frame is
 * still consumed, `BufferTooSmall` is returned and the full list can be read
 * with `st_tracker_last_tracks`.
 *
 * # Safety
 * `dets` must point to `n` detections (or be null with `n == 0`); `out`
 * must have room for `capacity` tracks (or be null with `capacity == 0`).
 */
enum StStatus st_tracker_step(struct StTracker *t,
                              double timestamp,
                              const struct StDetection *dets,
                              size_t n,
                              struct StTrack *out,
                              size_t capacity,
                              size_t *n_out);

/**
 * Copies the tracks reported by the latest step.
 *
 * # Safety
 * As for `st_tracker_step`.
 */
enum StStatus st_tracker_last_tracks(const struct StTracker *t,
                                     struct StTrack *out,
                                     size_t capacity,
                                     size_t *n_out);

/**
 * Loads and validates a JSON camera rig.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum StStatus st_rig_load(const char *path, struct StRig **out);

/**
 * The built-in six-camera surround rig.
 *
 * # Safety
 * `out` must be writable.
 */
enum StStatus st_rig_synthetic(struct StRig **out);

/**
 * # Safety
 * `rig` must come from this library and not be used afterwards.
 */
void st_rig_free(struct StRig *rig);

/**
 * # Safety
 * `rig` must be a live handle.
 */
size_t st_rig_camera_count(const struct StRig *rig);

/**
 * Projects a box into camera `camera`. `roi` receives
 * `[xmin, ymin, xmax, ymax]` of the clipped rectangle, or NaNs when the box
 * has no pixels in that camera.
 *
 * # Safety
 * `bbox` must point to 10 doubles, `roi` to 4, `visibility` to one value.
 */
enum StStatus st_project_box(const struct StRig *rig,
                             const double *bbox,
                             size_t camera,
                             double *roi,
                             enum StVisibility *visibility);

/**
 * Runs the randomized geometry and cascade checks; `passed` is set to 1 or 0.
 *
 * # Safety
 * `rig` must be a live handle and `passed` writable.
 */
enum StStatus st_selfcheck(const struct StRig *rig, uint64_t seed, int32_t *passed);

/**
 * One cascade refinement step. `delta` is
 * `[d_x, d_y, d_z, d_w, d_l, d_h, cos, sin, vx, vy]`.
 *
 * # Safety
 * All three pointers must reference 10 doubles.
 */
enum StStatus st_apply_adjustment(const double *bbox, const double *delta, double *out);

/**
 * Minimum-cost assignment on a row-major `rows x cols` matrix; `INFINITY`
 * marks forbidden cells. `row_to_col` (length `rows`) receives the column
 * of each row or -1.
 *
 * # Safety
 * `costs` must hold `rows * cols` doubles, `row_to_col` `rows` values.
 */
enum StStatus st_hungarian(const double *costs,
                           size_t rows,
                           size_t cols,
                           int64_t *row_to_col,
                           double *total);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPARSETRACK_H */
