#ifndef ORTHOCONTOUR_H
#define ORTHOCONTOUR_H

#include <stddef.h>
#include <stdint.h>

typedef enum OcStatus {
  OC_OK = 0,
  OC_ERR_NULL_POINTER = 1,
  OC_ERR_INVALID_ARGUMENT = 2,
  OC_ERR_IO = 3,
  OC_ERR_FORMAT = 4,
  OC_ERR_DEGENERATE = 5,
  OC_ERR_NUMERICAL = 6,
  OC_ERR_OUT_OF_RANGE = 7,
  OC_ERR_PANIC = 8,
} OcStatus;

/**
 * Decoded polygons with scores.
 */
typedef struct OcDetections OcDetections;

/**
 * Row-major grid of doubles.
 */
typedef struct OcGrid OcGrid;

/**
 * Decoder settings; start from `oc_decode_config_default`.
 */
typedef struct OcDecodeConfig {
  double theta;
  size_t nms_window;
  /**
   * An `OcTieRule` value.
   */
  uint32_t tie_rule;
  double alpha_scale;
  size_t min_candidates;
  size_t cluster_gap;
  /**
   * An `OcCandidateMode` value.
   */
  uint32_t mode;
} OcDecodeConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *oc_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *oc_version(void);

/**
 * Copies `height * width` row-major values into a new grid.
 *
 * # Safety
 * `values` must point to `height * width` readable doubles; `out` must be
 * writable.
 */
enum OcStatus oc_grid_new(size_t height,
                          size_t width,
                          const double *values,
                          struct OcGrid **out_grid);

/**
 * Releases a grid; null is ignored.
 *
 * # Safety
 * `grid` must come from this library and not be used afterwards.
 */
void oc_grid_free(struct OcGrid *grid);

/**
 * # Safety
 * `grid` must be a live handle; `height` and `width` must be writable.
 */
enum OcStatus oc_grid_shape(const struct OcGrid *grid, size_t *height, size_t *width);

/**
 * Copies the grid's values into `dst`, which holds `capacity` doubles.
 *
 * # Safety
 * `grid` must be a live handle; `dst` must hold `capacity` doubles.
 */
enum OcStatus oc_grid_values(const struct OcGrid *grid, double *dst, size_t capacity);

/**
 * Reads a heatmap file or binary PGM.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_grid` must be writable.
 */
enum OcStatus oc_grid_read(const char *path, struct OcGrid **out_grid);

/**
 * Writes the grid as a heatmap file (atomically).
 *
 * # Safety
 * `grid` must be a live handle; `path` a NUL-terminated string.
 */
enum OcStatus oc_grid_write(const struct OcGrid *grid, const char *path);

struct OcDecodeConfig oc_decode_config_default(void);

/**
 * Re-scores the two heatmaps and outlines every candidate cluster. A null
 * `config` means defaults.
 *
 * # Safety
 * `hmap` and `vmap` must be live handles; `config` null or valid;
 * `out_dets` writable.
 */
enum OcStatus oc_decode(const struct OcGrid *hmap,
                        const struct OcGrid *vmap,
                        const struct OcDecodeConfig *config,
                        struct OcDetections **out_dets);

/**
 * Releases a detection list; null is ignored.
 *
 * # Safety
 * `dets` must come from this library and not be used afterwards.
 */
void oc_detections_free(struct OcDetections *dets);

/**
 * Number of detections, or 0 for null.
 *
 * # Safety
 * `dets` must be null or a live handle.
 */
size_t oc_detections_count(const struct OcDetections *dets);

/**
 * # Safety
 * `dets` must be a live handle; `score` writable.
 */
enum OcStatus oc_detection_score(const struct OcDetections *dets, size_t index, double *score);

/**
 * # Safety
 * `dets` must be a live handle; `count` writable.
 */
enum OcStatus oc_detection_vertex_count(const struct OcDetections *dets,
                                        size_t index,
                                        size_t *count);

/**
 * Writes `x0, y0, x1, y1, ...` into `xy`, which holds `capacity` doubles.
 *
 * # Safety
 * `dets` must be a live handle; `xy` must hold `capacity` doubles.
 */
enum OcStatus oc_detection_vertices(const struct OcDetections *dets,
                                    size_t index,
                                    double *xy,
                                    size_t capacity);

/**
 * Raster IoU of two polygons given as flat `x, y` arrays.
 *
 * # Safety
 * `a` and `b` must hold `2 * a_vertices` and `2 * b_vertices` doubles;
 * `iou` must be writable.
 */
enum OcStatus oc_polygon_iou(const double *a,
                             size_t a_vertices,
                             const double *b,
                             size_t b_vertices,
                             size_t resolution,
                             double *iou);

/**
 * IoU loss of `pred` against `gt` (both `x_tl, y_tl, x_rb, y_rb`) and its
 * gradient with respect to `pred`. `grad` may be null.
 *
 * # Safety
 * `pred` and `gt` must hold 4 doubles; `loss` writable; `grad` null or
 * holding 4 doubles.
 */
enum OcStatus oc_iou_loss(const double *pred, const double *gt, double *loss, double *grad);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ORTHOCONTOUR_H */
