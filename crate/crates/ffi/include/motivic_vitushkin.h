#ifndef MOTIVIC_VITUSHKIN_H
#define MOTIVIC_VITUSHKIN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes. Zero is success; the rest mirror the library error kinds.
typedef enum MvStatus {
  MV_STATUS_OK = 0,
  MV_STATUS_NULL_POINTER = 1,
  MV_STATUS_INVALID_UTF8 = 2,
  MV_STATUS_USAGE = 3,
  MV_STATUS_SYNTAX = 4,
  MV_STATUS_DOMAIN_ERROR = 5,
  MV_STATUS_BASE_FIELD_MISMATCH = 6,
  MV_STATUS_UNSUPPORTED = 7,
  MV_STATUS_DEPTH_EXCEEDED = 8,
  MV_STATUS_UNCERTIFIED = 9,
  MV_STATUS_PRECISION_LOSS = 10,
  MV_STATUS_INCONCLUSIVE = 11,
  MV_STATUS_HYPOTHESIS_FAILED = 12,
  MV_STATUS_OTHER = 13,
  MV_STATUS_PANIC = 14,
} MvStatus;

// Opaque definable set.
typedef struct MvSet MvSet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Parse a set description. `field` may be null when the text carries a
// `field` header. On success `*out` owns a new handle.
//
// # Safety
// `text` and `field` must be null or valid NUL-terminated strings; `out` must be writable.
enum MvStatus mv_set_parse(const char *text, const char *field, struct MvSet **out);

// # Safety
// `set` must be null or a handle from `mv_set_parse` not yet freed.
void mv_set_free(struct MvSet *set);

// Ambient dimension n and set dimension d.
//
// # Safety
// `set` must be a live handle; out-pointers must be writable.
enum MvStatus mv_set_dims(const struct MvSet *set, uintptr_t *ambient, uintptr_t *dim);

// mu_d of the set as JSON; `dim < 0` means the set's own dimension.
//
// # Safety
// `set` must be a live handle; `out` must be writable.
enum MvStatus mv_measure_json(const struct MvSet *set, int32_t dim, char **out);

// Minimal non-riso-trivial balls and singletons with V_0, as JSON.
//
// # Safety
// `set` must be a live handle; `out` must be writable.
enum MvStatus mv_riso_json(const struct MvSet *set, char **out);

// V_0 evaluated at q = |k| as numerator/denominator strings in JSON.
//
// # Safety
// `set` must be a live handle; `out` must be writable.
enum MvStatus mv_v0_at_q_json(const struct MvSet *set, char **out);

// Exact point-count measure at truncation depth `depth`, as JSON.
//
// # Safety
// `set` must be a live handle; `out` must be writable.
enum MvStatus mv_count_measure_json(const struct MvSet *set, uint32_t depth, char **out);

// Sampled Cauchy-Crofton check. `*verdict` is set even when `report` is null.
//
// # Safety
// `set` must be a live handle; `verdict` must be writable; `report` may be null.
enum MvStatus mv_crofton_check(const struct MvSet *set,
                               uint32_t depth,
                               uint64_t samples,
                               uint64_t seed,
                               double tol,
                               bool *verdict,
                               char **report);

// Decide nonnegativity of an element of A given as an expression in L.
//
// # Safety
// `expr` must be a NUL-terminated string; `out` must be writable.
enum MvStatus mv_is_nonneg(const char *expr, bool *out);

// # Safety
// `s` must be null or a string returned by this library, not yet freed.
void mv_string_free(char *s);

// Message of the last failure on this thread, or null. Valid until the next
// failing call on the same thread.
const char *mv_last_error(void);

// Library version, static storage.
const char *mv_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOTIVIC_VITUSHKIN_H */
