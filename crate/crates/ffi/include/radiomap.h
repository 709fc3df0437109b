#ifndef RADIOMAP_H
#define RADIOMAP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum RmStatus {
  RM_STATUS_OK = 0,
  RM_STATUS_NULL_POINTER = 1,
  RM_STATUS_INVALID_INPUT = 2,
  RM_STATUS_PRECONDITION = 3,
  RM_STATUS_IO = 4,
  RM_STATUS_PARSE = 5,
  RM_STATUS_NO_MEASUREMENT_MASS = 6,
  RM_STATUS_PANIC = 7,
} RmStatus;

/**
 * Measurement records.
 */
typedef struct RmDataset RmDataset;

/**
 * A fitted radio map.
 */
typedef struct RmRadioMap RmRadioMap;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *rm_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rm_version(void);

/**
 * Builds a dataset from `n` links (`coords`: n x 6 doubles, user xyz then
 * aerial xyz) and their RSS values in dB.
 *
 * # Safety
 * `coords` must hold `6 n` doubles, `rss_db` `n` doubles, `out` be writable.
 */
enum RmStatus rm_dataset_new(const double *coords,
                             const double *rss_db,
                             size_t n,
                             struct RmDataset **out);

/**
 * Loads measurements from a CSV with header `xu,yu,zu,xd,yd,zd,rss_db`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum RmStatus rm_dataset_load_csv(const char *path, struct RmDataset **out);

/**
 * Number of records, or 0 for NULL.
 *
 * # Safety
 * `data` must be NULL or a live dataset handle.
 */
size_t rm_dataset_len(const struct RmDataset *data);

/**
 * # Safety
 * `data` must be NULL or a handle not yet freed.
 */
void rm_dataset_free(struct RmDataset *data);

/**
 * Fits a radio map. `config_json` holds a map configuration (grid, filter,
 * fit and kriging settings).
 *
 * # Safety
 * `data` must be a live handle, `config_json` a NUL-terminated string and
 * `out` writable.
 */
enum RmStatus rm_map_fit(const struct RmDataset *data,
                         const char *config_json,
                         struct RmRadioMap **out);

/**
 * Loads a map saved by `rm_map_save` or the command-line tool.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum RmStatus rm_map_load(const char *path, struct RmRadioMap **out);

/**
 * Writes the map JSON plus its `.heights.csv` / `.residuals.csv` sidecars.
 *
 * # Safety
 * `map` must be a live handle and `path` a NUL-terminated string.
 */
enum RmStatus rm_map_save(const struct RmRadioMap *map, const char *path);

/**
 * Gains in dB (deterministic part plus kriged residual) for `n` links.
 *
 * # Safety
 * `map` must be a live handle, `coords` hold `6 n` doubles and `out` have
 * room for `n` doubles.
 */
enum RmStatus rm_map_gain(const struct RmRadioMap *map,
                          const double *coords,
                          size_t n,
                          double *out);

/**
 * Number of obstruction classes K, or 0 for NULL.
 *
 * # Safety
 * `map` must be NULL or a live handle.
 */
size_t rm_map_classes(const struct RmRadioMap *map);

/**
 * Copies up to `len` path-loss parameters `[alpha_0, beta_0, ...]` into
 * `out` and returns how many there are in total.
 *
 * # Safety
 * `map` must be NULL or a live handle; `out` must have room for `len`
 * doubles when non-NULL.
 */
size_t rm_map_theta(const struct RmRadioMap *map, double *out, size_t len);

/**
 * # Safety
 * `map` must be NULL or a handle not yet freed.
 */
void rm_map_free(struct RmRadioMap *map);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RADIOMAP_H */
