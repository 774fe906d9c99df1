#ifndef QGRAD_H
#define QGRAD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define QG_DISTRIBUTION_RADEMACHER 0

#define QG_DISTRIBUTION_GAUSSIAN 1

#define QG_METHOD_ABSMAX 0

#define QG_METHOD_ABSMEAN 1

#define QG_METHOD_SIGN 2

typedef enum QgStatus {
  QG_STATUS_OK = 0,
  QG_STATUS_CONFIG = 1,
  QG_STATUS_DIMENSION = 2,
  QG_STATUS_DATA = 3,
  QG_STATUS_SCHEME = 4,
  QG_STATUS_FORMAT = 5,
  QG_STATUS_CORRUPTION = 6,
  QG_STATUS_LOOKUP = 7,
  QG_STATUS_IO = 8,
  QG_STATUS_ARGUMENT = 9,
  QG_STATUS_NULL_POINTER = 10,
  QG_STATUS_PANIC = 11,
} QgStatus;

/**
 * Opaque projector handle.
 */
typedef struct QgProjector QgProjector;

/**
 * Opaque read-only store handle.
 */
typedef struct QgStore QgStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *qg_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *qg_version(void);

/**
 * Creates a projector for `R: R^input_dim -> R^output_dim`; `distribution`
 * is one of the `QG_DISTRIBUTION_*` constants.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum QgStatus qg_projector_new(uint64_t seed,
                               size_t input_dim,
                               size_t output_dim,
                               uint32_t distribution,
                               struct QgProjector **out);

/**
 * Projects `count` row-major vectors of `input_dim` floats into `output`
 * (`count * output_dim` floats).
 *
 * # Safety
 * `p` must come from [`qg_projector_new`]; the buffers must hold the stated
 * number of elements.
 */
enum QgStatus qg_projector_project(const struct QgProjector *p,
                                   const float *input,
                                   size_t count,
                                   float *output);

/**
 * # Safety
 * `p` must come from [`qg_projector_new`] or be null.
 */
void qg_projector_free(struct QgProjector *p);

/**
 * Quantizes `len` floats into `codes` (`len` bytes) and the scale factor;
 * `method` is one of the `QG_METHOD_*` constants.
 * `degenerate` may be null.
 *
 * # Safety
 * Buffers must hold `len` elements; `scale` must be writable.
 */
enum QgStatus qg_quantize(const float *values,
                          size_t len,
                          uint32_t method,
                          uint8_t bits,
                          int8_t *codes,
                          float *scale,
                          bool *degenerate);

/**
 * Bytes needed to pack `k` codes of `bits` bits.
 */
size_t qg_packed_len(size_t k, uint8_t bits);

/**
 * Packs `len` codes into `out`, which must be `qg_packed_len(len, bits)` bytes.
 *
 * # Safety
 * Buffers must hold the stated number of elements.
 */
enum QgStatus qg_pack(const int8_t *codes, size_t len, uint8_t bits, uint8_t *out, size_t out_len);

/**
 * Unpacks `k` codes from `bytes` (`bytes_len` must equal `qg_packed_len(k, bits)`).
 *
 * # Safety
 * Buffers must hold the stated number of elements.
 */
enum QgStatus qg_unpack(const uint8_t *bytes,
                        size_t bytes_len,
                        uint8_t bits,
                        int8_t *codes,
                        size_t k);

/**
 * Storage in bytes for `n` samples of `k` codes at `bits` bits over
 * `checkpoints` checkpoints.
 *
 * # Safety
 * `out` must be writable.
 */
enum QgStatus qg_estimate_size(uint64_t n,
                               uint64_t k,
                               uint32_t bits,
                               uint64_t checkpoints,
                               bool include_scales,
                               uint64_t *out);

/**
 * Opens a store file for reading.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
 */
enum QgStatus qg_store_open(const char *path, struct QgStore **out);

/**
 * Number of vectors, or 0 for a null handle.
 *
 * # Safety
 * `s` must come from [`qg_store_open`] or be null.
 */
size_t qg_store_len(const struct QgStore *s);

/**
 * Vector length `k`, or 0 for a null handle.
 *
 * # Safety
 * As [`qg_store_len`].
 */
size_t qg_store_k(const struct QgStore *s);

/**
 * Code bitwidth, 32 for float stores, 0 for a null handle.
 *
 * # Safety
 * As [`qg_store_len`].
 */
uint32_t qg_store_bits(const struct QgStore *s);

/**
 * Sample id of vector `index`, owned by the handle; null when out of range.
 *
 * # Safety
 * As [`qg_store_len`].
 */
const char *qg_store_sample_id(const struct QgStore *s, size_t index);

/**
 * Reads the codes and scale of vector `index` of a quantized store.
 *
 * # Safety
 * `codes` must hold `k` bytes and `scale` be writable.
 */
enum QgStatus qg_store_read_codes(const struct QgStore *s,
                                  size_t index,
                                  int8_t *codes,
                                  size_t k,
                                  float *scale);

/**
 * Reads vector `index` of a float32 store into `values` (`k` floats).
 *
 * # Safety
 * `values` must hold `k` floats.
 */
enum QgStatus qg_store_read_float(const struct QgStore *s, size_t index, float *values, size_t k);

/**
 * # Safety
 * `s` must come from [`qg_store_open`] or be null.
 */
void qg_store_free(struct QgStore *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QGRAD_H */
