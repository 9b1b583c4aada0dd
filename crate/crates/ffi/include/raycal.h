#ifndef RAYCAL_H
#define RAYCAL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum RaycalStatus {
  RAYCAL_STATUS_OK = 0,
  RAYCAL_STATUS_NULL_POINTER = 1,
  RAYCAL_STATUS_INVALID_ARGUMENT = 2,
  RAYCAL_STATUS_IO = 3,
  RAYCAL_STATUS_PARSE = 4,
  RAYCAL_STATUS_NON_FINITE = 5,
  RAYCAL_STATUS_GEOMETRY = 6,
  RAYCAL_STATUS_BUFFER_TOO_SMALL = 7,
  RAYCAL_STATUS_PANIC = 8,
} RaycalStatus;

/**
 * Camera list loaded from a camera file.
 */
typedef struct RaycalCameras RaycalCameras;

/**
 * Voxel radiance field loaded from a field file.
 */
typedef struct RaycalField RaycalField;

typedef struct RaycalCameraError {
  double focal_pct;
  double rotation_deg;
  double translation;
} RaycalCameraError;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *raycal_version(void);

/**
 * Length in bytes of the last error message on this thread, including the
 * terminating NUL; 0 when there is none.
 */
size_t raycal_last_error_length(void);

/**
 * Copies the last error message (NUL-terminated) into `buf`. Returns the
 * number of bytes written excluding the NUL, 0 if there is no error, or -1
 * if `buf` is NULL or shorter than [`raycal_last_error_length`].
 */
ptrdiff_t raycal_last_error_message(char *buf, size_t len);

void raycal_clear_error(void);

/**
 * Reads a camera file into a new handle stored in `*out`.
 */
enum RaycalStatus raycal_cameras_read(const char *path, struct RaycalCameras **out);

/**
 * Loads learned residuals from a residual file into `cameras`.
 */
enum RaycalStatus raycal_cameras_read_residuals(struct RaycalCameras *cameras, const char *path);

enum RaycalStatus raycal_cameras_write(const struct RaycalCameras *cameras, const char *path);

/**
 * Number of cameras; 0 for NULL.
 */
size_t raycal_cameras_count(const struct RaycalCameras *cameras);

enum RaycalStatus raycal_camera_image_size(const struct RaycalCameras *cameras,
                                           size_t index,
                                           size_t *width,
                                           size_t *height);

/**
 * Projects world point `point[3]` into `pixel[2]` of camera `index`.
 */
enum RaycalStatus raycal_camera_project(const struct RaycalCameras *cameras,
                                        size_t index,
                                        const double *point,
                                        double *pixel);

/**
 * World ray through `pixel[2]` of camera `index`. `dir` is not normalized.
 */
enum RaycalStatus raycal_camera_unproject(const struct RaycalCameras *cameras,
                                          size_t index,
                                          const double *pixel,
                                          double *origin,
                                          double *dir);

/**
 * Projected ray distance in pixels between `pixel_a` in camera `a` and
 * `pixel_b` in camera `b`. `*valid` is 0 when the pair is skipped (parallel
 * rays, failed chirality or distance above `eta`), in which case
 * `*distance` is left untouched.
 */
enum RaycalStatus raycal_projected_ray_distance(const struct RaycalCameras *cameras,
                                                size_t a,
                                                size_t b,
                                                const double *pixel_a,
                                                const double *pixel_b,
                                                double eta,
                                                double *distance,
                                                int *valid);

/**
 * Mean camera error of `estimate` against `truth`; `per_camera`, when not
 * NULL, receives one entry per camera (`len` must be at least the count).
 */
enum RaycalStatus raycal_camera_error(const struct RaycalCameras *truth,
                                      const struct RaycalCameras *estimate,
                                      struct RaycalCameraError *mean,
                                      struct RaycalCameraError *per_camera,
                                      size_t len);

void raycal_cameras_free(struct RaycalCameras *cameras);

enum RaycalStatus raycal_field_read(const char *path, struct RaycalField **out);

void raycal_field_free(struct RaycalField *field);

/**
 * Renders camera `index` into `rgb`, row-major with 3 values per pixel in
 * `[0, 1]`; `len` must be at least `3 * width * height`.
 */
enum RaycalStatus raycal_render(const struct RaycalField *field,
                                const struct RaycalCameras *cameras,
                                size_t index,
                                double near,
                                double far,
                                size_t samples,
                                double *rgb,
                                size_t len);

/**
 * Runs the command-line tool with `argv[0..argc]` (including a program
 * name) and returns its exit code. Output goes to the process's stdout and
 * stderr.
 */
int raycal_run(int argc, const char *const *argv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RAYCAL_H */
