#ifndef REDAL_H
#define REDAL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RedalStatus {
  REDAL_STATUS_OK = 0,
  REDAL_STATUS_NULL_ARGUMENT = 1,
  REDAL_STATUS_IO = 2,
  REDAL_STATUS_FORMAT = 3,
  REDAL_STATUS_VALIDATION = 4,
  REDAL_STATUS_PANIC = 5,
} RedalStatus;

/**
 * A scan: positions plus optional colors.
 */
typedef struct RedalCloud RedalCloud;

/**
 * Per-point class probabilities and optional features.
 */
typedef struct RedalPredictions RedalPredictions;

/**
 * Region assignment of one scan.
 */
typedef struct RedalRegions RedalRegions;

/**
 * Ranked region scores of one scan.
 */
typedef struct RedalScoreTable RedalScoreTable;

/**
 * One row of a score table.
 */
typedef struct RedalScoreRow {
  uint32_t region_id;
  size_t points;
  double entropy;
  double color;
  double structure;
  double phi;
} RedalScoreRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *redal_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *redal_version(void);

/**
 * Builds a cloud from `n` xyz triples and, when `rgb` is not NULL, `n` RGB triples.
 *
 * # Safety
 * `xyz` must point to `3*n` floats, `rgb` to `3*n` bytes or be NULL, and
 * `scan_id` to a NUL-terminated string.
 */
enum RedalStatus redal_cloud_new(const char *scan_id,
                                 const float *xyz,
                                 const uint8_t *rgb,
                                 size_t n,
                                 struct RedalCloud **out);

/**
 * Loads a `.bin` or `.xyzrgb` scan; the scan id is the file stem.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
enum RedalStatus redal_cloud_load(const char *path, struct RedalCloud **out);

/**
 * # Safety
 * `cloud` must be NULL or a live handle.
 */
size_t redal_cloud_len(const struct RedalCloud *cloud);

/**
 * # Safety
 * `cloud` must be NULL or a handle not yet freed.
 */
void redal_cloud_free(struct RedalCloud *cloud);

/**
 * Over-segments a cloud into supervoxel regions.
 *
 * # Safety
 * `cloud` must be a live handle and `out` writable.
 */
enum RedalStatus redal_segment(const struct RedalCloud *cloud,
                               double r_seed,
                               double r_voxel,
                               uint64_t seed,
                               struct RedalRegions **out);

/**
 * Wraps a dense region assignment `ids[0..n]`.
 *
 * # Safety
 * `ids` must point to `n` values and `scan_id` be NUL-terminated.
 */
enum RedalStatus redal_regions_new(const char *scan_id,
                                   const uint32_t *ids,
                                   size_t n,
                                   struct RedalRegions **out);

/**
 * Number of regions.
 *
 * # Safety
 * `regions` must be NULL or a live handle.
 */
size_t redal_regions_count(const struct RedalRegions *regions);

/**
 * Number of points covered.
 *
 * # Safety
 * `regions` must be NULL or a live handle.
 */
size_t redal_regions_len(const struct RedalRegions *regions);

/**
 * Copies the per-point region ids into `out[0..cap]`; `cap` must equal the point count.
 *
 * # Safety
 * `regions` must be a live handle and `out` point to `cap` writable values.
 */
enum RedalStatus redal_regions_copy(const struct RedalRegions *regions, uint32_t *out, size_t cap);

/**
 * # Safety
 * `regions` must be NULL or a handle not yet freed.
 */
void redal_regions_free(struct RedalRegions *regions);

/**
 * Wraps row-major probabilities (`n` by `classes`) and optional features (`n` by `dim`).
 *
 * # Safety
 * `probs` must point to `n*classes` floats; `features` to `n*dim` floats or be NULL.
 */
enum RedalStatus redal_predictions_new(const char *scan_id,
                                       const float *probs,
                                       size_t n,
                                       size_t classes,
                                       const float *features,
                                       size_t dim,
                                       struct RedalPredictions **out);

/**
 * # Safety
 * `pred` must be NULL or a handle not yet freed.
 */
void redal_predictions_free(struct RedalPredictions *pred);

/**
 * Scores every region of one scan and ranks them by `phi`.
 * `beta` is ignored for colorless clouds.
 *
 * # Safety
 * All handles must be live and `out` writable.
 */
enum RedalStatus redal_score_regions(const struct RedalCloud *cloud,
                                     const struct RedalRegions *regions,
                                     const struct RedalPredictions *pred,
                                     double alpha,
                                     double beta,
                                     double gamma,
                                     size_t k,
                                     struct RedalScoreTable **out);

/**
 * # Safety
 * `table` must be NULL or a live handle.
 */
size_t redal_scores_len(const struct RedalScoreTable *table);

/**
 * Row `i` in rank order.
 *
 * # Safety
 * `table` must be a live handle and `out` writable.
 */
enum RedalStatus redal_scores_get(const struct RedalScoreTable *table,
                                  size_t i,
                                  struct RedalScoreRow *out);

/**
 * # Safety
 * `table` must be NULL or a handle not yet freed.
 */
void redal_scores_free(struct RedalScoreTable *table);

/**
 * Applies the cluster-wise decay to scores already sorted best-first.
 *
 * # Safety
 * `phi`, `labels` and `out` must each hold `n` elements.
 */
enum RedalStatus redal_penalize_similar(const double *phi,
                                        const size_t *labels,
                                        size_t n,
                                        double eta,
                                        size_t clusters,
                                        double *out);

/**
 * Seeded k-means++ over `n` row-major vectors of width `dim`; writes one
 * cluster id per row.
 *
 * # Safety
 * `data` must hold `n*dim` values and `assignment` `n` writable slots.
 */
enum RedalStatus redal_kmeans(const double *data,
                              size_t n,
                              size_t dim,
                              size_t clusters,
                              uint64_t seed,
                              size_t max_iters,
                              size_t *assignment);

/**
 * Diversity-penalizes one scan's table and fills `out` with the selected
 * region ids in selection order. `features` holds one row of width `dim`
 * per region id. `count` receives the batch length.
 *
 * # Safety
 * `table` must be a live handle, `features` hold `regions*dim` values, and
 * `out` have room for `cap` ids.
 */
enum RedalStatus redal_select(const struct RedalScoreTable *table,
                              const double *features,
                              size_t dim,
                              size_t clusters,
                              double eta,
                              size_t budget,
                              uint64_t seed,
                              uint32_t *out,
                              size_t cap,
                              size_t *count);

/**
 * Per-class IoU (NaN for classes absent from both inputs) and mIoU.
 *
 * # Safety
 * `pred` and `truth` must hold `n` labels, `per_class` `classes` slots,
 * and `miou` be writable.
 */
enum RedalStatus redal_compute_iou(const uint8_t *pred,
                                   const uint8_t *truth,
                                   size_t n,
                                   size_t classes,
                                   double *per_class,
                                   double *miou);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REDAL_H */
