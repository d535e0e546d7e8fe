#ifndef STEREO6D_H
#define STEREO6D_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum S6dStatus {
  S6D_STATUS_OK = 0,
  S6D_STATUS_NULL_POINTER = 1,
  S6D_STATUS_INVALID_ARGUMENT = 2,
  S6D_STATUS_INSUFFICIENT_DATA = 3,
  S6D_STATUS_DEGENERATE = 4,
  S6D_STATUS_NUMERIC_FAILURE = 5,
  S6D_STATUS_CONFIGURATION = 6,
  S6D_STATUS_PANIC = 7,
} S6dStatus;

typedef enum S6dView {
  S6D_VIEW_LEFT = 0,
  S6D_VIEW_RIGHT = 1,
} S6dView;

typedef enum S6dStrategy {
  S6D_STRATEGY_MONO_LEFT = 0,
  S6D_STRATEGY_LATE_POSE_COMBINE = 1,
  S6D_STRATEGY_MID_JOINT_PNP = 2,
  S6D_STRATEGY_DISPARITY3D3D = 3,
  S6D_STRATEGY_EARLY_JOINT_PNP_PLUS_DEPTH = 4,
} S6dStrategy;

typedef struct S6dCorrespondences S6dCorrespondences;

typedef struct S6dDisparity S6dDisparity;

typedef struct S6dRig S6dRig;

typedef struct S6dSolverParams {
  double ransac_threshold_px;
  double ransac_confidence;
  size_t max_iterations;
  size_t refine_iterations;
  double inlier_threshold_mm;
  double depth_weight;
  uint64_t seed;
} S6dSolverParams;

/**
 * Object → left camera. Rotation is row-major.
 */
typedef struct S6dPose {
  double rotation[9];
  double translation[3];
} S6dPose;

/**
 * Absent diagnostics are NaN.
 */
typedef struct S6dEstimate {
  struct S6dPose pose;
  size_t inlier_count;
  size_t correspondence_count;
  double inlier_ratio;
  double reprojection_px;
  double residual_mm;
  bool converged;
  bool fallback;
} S6dEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` as a
 * NUL-terminated string, truncating to `capacity`. Returns the length the
 * full message needs including the terminator; 0 when there is no error.
 *
 * # Safety
 * `buf` must be null or point to `capacity` writable bytes.
 */
size_t s6d_last_error(char *buf, size_t capacity);

void s6d_clear_error(void);

/**
 * Static NUL-terminated version string.
 */
const char *s6d_version(void);

/**
 * Rectified rig with shared intrinsics and baseline along +X (mm).
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum S6dStatus s6d_rig_new_rectified(double fx,
                                     double fy,
                                     double cx,
                                     double cy,
                                     uint32_t width,
                                     uint32_t height,
                                     double baseline_mm,
                                     struct S6dRig **out);

/**
 * # Safety
 * `rig` must be null or come from `s6d_rig_new_rectified`, freed once.
 */
void s6d_rig_free(struct S6dRig *rig);

struct S6dCorrespondences *s6d_correspondences_new(void);

/**
 * Adds one pixel ↔ object-point pair. Weight must lie in [0, 1].
 *
 * # Safety
 * `set` must be null or a live handle.
 */
enum S6dStatus s6d_correspondences_push(struct S6dCorrespondences *set,
                                        enum S6dView view,
                                        double u,
                                        double v,
                                        double x,
                                        double y,
                                        double z,
                                        double weight);

/**
 * # Safety
 * `set` must be null or a live handle.
 */
size_t s6d_correspondences_len(const struct S6dCorrespondences *set);

/**
 * # Safety
 * `set` must be null or come from `s6d_correspondences_new`, freed once.
 */
void s6d_correspondences_free(struct S6dCorrespondences *set);

/**
 * Disparity map from a row-major array of `width * height` values in px;
 * values ≤ 0 or non-finite are invalid.
 *
 * # Safety
 * `values` must point to `len` readable doubles; `out` must be valid for writes.
 */
enum S6dStatus s6d_disparity_from_values(uint32_t width,
                                         uint32_t height,
                                         const double *values,
                                         size_t len,
                                         struct S6dDisparity **out);

/**
 * Left-referenced SAD block matching on 8-bit grayscale images.
 *
 * # Safety
 * `left` and `right` must each point to `width * height` readable bytes;
 * `out` must be valid for writes.
 */
enum S6dStatus s6d_disparity_block_match(const uint8_t *left,
                                         const uint8_t *right,
                                         uint32_t width,
                                         uint32_t height,
                                         uint32_t max_disparity,
                                         uint32_t window,
                                         struct S6dDisparity **out);

/**
 * # Safety
 * `map` must be null or a live handle.
 */
size_t s6d_disparity_valid_count(const struct S6dDisparity *map);

/**
 * # Safety
 * `map` must be null or a live handle; the pixel must be inside the map.
 */
enum S6dStatus s6d_disparity_get(const struct S6dDisparity *map,
                                 uint32_t x,
                                 uint32_t y,
                                 double *out);

/**
 * # Safety
 * `map` must be null or come from a constructor above, freed once.
 */
void s6d_disparity_free(struct S6dDisparity *map);

struct S6dSolverParams s6d_solver_params_default(void);

/**
 * Solves the object pose in the left camera frame. `disparity` may be null
 * for strategies that do not lift points; `params` may be null for
 * defaults.
 *
 * # Safety
 * Handles must be live; `out` must be valid for writes.
 */
enum S6dStatus s6d_estimate(enum S6dStrategy strategy,
                            const struct S6dCorrespondences *set,
                            const struct S6dRig *rig,
                            const struct S6dDisparity *disparity,
                            const struct S6dSolverParams *params,
                            struct S6dEstimate *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STEREO6D_H */
