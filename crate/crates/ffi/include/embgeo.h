#ifndef EMBGEO_H
#define EMBGEO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum EmbgeoStatus {
  EMBGEO_STATUS_OK = 0,
  EMBGEO_STATUS_NULL_POINTER = 1,
  EMBGEO_STATUS_INVALID_ARGUMENT = 2,
  EMBGEO_STATUS_DOMAIN = 3,
  EMBGEO_STATUS_ZERO_ROW = 4,
  EMBGEO_STATUS_INDETERMINATE = 5,
  EMBGEO_STATUS_TRAINING = 6,
  EMBGEO_STATUS_IO = 7,
  EMBGEO_STATUS_PARSE = 8,
  EMBGEO_STATUS_INTERNAL = 9,
  EMBGEO_STATUS_PANIC = 10,
} EmbgeoStatus;

/**
 * A trained model checkpoint.
 */
typedef struct EmbgeoCheckpoint EmbgeoCheckpoint;

/**
 * Row-major dense matrix.
 */
typedef struct EmbgeoMatrix EmbgeoMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next embgeo call on the same thread.
 */
const char *embgeo_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *embgeo_version(void);

/**
 * Copies `rows * cols` row-major values into a new matrix.
 *
 * # Safety
 * `data` must point to `rows * cols` readable doubles and `out` must be a
 * valid pointer.
 */
enum EmbgeoStatus embgeo_matrix_new(size_t rows,
                                    size_t cols,
                                    const double *data,
                                    struct EmbgeoMatrix **out);

/**
 * # Safety
 * `m` must be null or a handle returned by this library, freed once.
 */
void embgeo_matrix_free(struct EmbgeoMatrix *m);

/**
 * # Safety
 * `m` must be null or a valid handle.
 */
size_t embgeo_matrix_rows(const struct EmbgeoMatrix *m);

/**
 * # Safety
 * `m` must be null or a valid handle.
 */
size_t embgeo_matrix_cols(const struct EmbgeoMatrix *m);

/**
 * Copies the row-major contents into `buf`, which holds `len` doubles.
 *
 * # Safety
 * `m` must be a valid handle and `buf` must point to `len` writable doubles.
 */
enum EmbgeoStatus embgeo_matrix_copy_data(const struct EmbgeoMatrix *m, double *buf, size_t len);

/**
 * Sum of pairwise cosines over ordered pairs of distinct rows, and the same
 * value divided by N².
 *
 * # Safety
 * `m` must be a valid handle; the out pointers must be valid or null.
 */
enum EmbgeoStatus embgeo_cosreg(const struct EmbgeoMatrix *m, double *r_sum, double *r_scaled);

/**
 * Geometry report of the matrix as a JSON string; release it with
 * [`embgeo_string_free`].
 *
 * # Safety
 * `m` must be a valid handle and `out_json` a valid pointer.
 */
enum EmbgeoStatus embgeo_geometry_report_json(const struct EmbgeoMatrix *m,
                                              size_t pair_cap,
                                              uint64_t seed,
                                              char **out_json);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void embgeo_string_free(char *s);

/**
 * Searches for a unit vector with negative inner product against every row.
 * On success `feasible` is 1 and `direction` (of length `cols`) and `margin`
 * are filled, or `feasible` is 0 when the rows' hull contains the origin.
 * An exhausted iteration budget returns `Indeterminate`.
 *
 * # Safety
 * `m` must be a valid handle, `feasible` a valid pointer, `direction` null
 * or `direction_len` writable doubles, and `margin` null or valid.
 */
enum EmbgeoStatus embgeo_negative_direction(const struct EmbgeoMatrix *m,
                                            double tolerance,
                                            size_t max_iters,
                                            int32_t *feasible,
                                            double *direction,
                                            size_t direction_len,
                                            double *margin);

/**
 * Loads and validates a checkpoint JSON file.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string and `out` a valid pointer.
 */
enum EmbgeoStatus embgeo_checkpoint_load(const char *path, struct EmbgeoCheckpoint **out);

/**
 * # Safety
 * `c` must be null or a handle returned by this library, freed once.
 */
void embgeo_checkpoint_free(struct EmbgeoCheckpoint *c);

/**
 * # Safety
 * `c` must be null or a valid handle.
 */
size_t embgeo_checkpoint_vocab_size(const struct EmbgeoCheckpoint *c);

/**
 * Regularization weight the checkpoint was trained with.
 *
 * # Safety
 * `c` must be null or a valid handle.
 */
double embgeo_checkpoint_gamma(const struct EmbgeoCheckpoint *c);

/**
 * Copy of the tied embedding matrix as a new matrix handle.
 *
 * # Safety
 * `c` must be a valid handle and `out` a valid pointer.
 */
enum EmbgeoStatus embgeo_checkpoint_embedding(const struct EmbgeoCheckpoint *c,
                                              struct EmbgeoMatrix **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EMBGEO_H */
