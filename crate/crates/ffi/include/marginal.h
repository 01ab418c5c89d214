#ifndef MARGINAL_H
#define MARGINAL_H

/* Generated by cbindgen from marginal-capi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible call.
 */
typedef enum MrgStatus {
  MRG_STATUS_OK = 0,
  MRG_STATUS_NULL_ARGUMENT = 1,
  MRG_STATUS_INVALID_ARGUMENT = 2,
  MRG_STATUS_OUT_OF_RANGE = 3,
  MRG_STATUS_SIZING = 4,
  MRG_STATUS_TRUNCATION = 5,
  MRG_STATUS_INFEASIBLE = 6,
  MRG_STATUS_BLOW_UP = 7,
  MRG_STATUS_UNSUPPORTED = 8,
  MRG_STATUS_IO = 9,
  MRG_STATUS_BUFFER_TOO_SMALL = 10,
  MRG_STATUS_INTERNAL = 11,
} MrgStatus;

/**
 * Opaque kernel table handle.
 */
typedef struct MrgKernel MrgKernel;

/**
 * Opaque overlap table handle.
 */
typedef struct MrgOverlap MrgOverlap;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version of the library, as a static NUL-terminated string.
 */
const char *mrg_version(void);

/**
 * Copy the most recent error message on this thread into `buf` (truncated
 * to `cap` bytes including the terminator). Returns the full message
 * length, not counting the terminator.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes, or be null (length query).
 */
size_t mrg_last_error(char *buf, size_t cap);

/**
 * Build a kernel table. Model tags: 0 = 2d simple walk, 1 = long-range
 * walk on Z, 2 = renewal (pinning).
 *
 * # Safety
 * `out` must be a valid pointer; on `Ok` it receives an owned handle that
 * must be released with `mrg_kernel_free`.
 */
enum MrgStatus mrg_kernel_build(uint8_t model_tag,
                                uint64_t n_max,
                                double tail_tol,
                                struct MrgKernel **out);

/**
 * Load a kernel from its binary cache file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` as in `mrg_kernel_build`.
 */
enum MrgStatus mrg_kernel_load(const char *path, struct MrgKernel **out);

/**
 * Write a kernel to its binary cache file.
 *
 * # Safety
 * `kernel` must be a live handle, `path` a NUL-terminated string.
 */
enum MrgStatus mrg_kernel_save(const struct MrgKernel *kernel, const char *path);

/**
 * # Safety
 * `kernel` must be a handle from this library, or null (no-op).
 */
void mrg_kernel_free(struct MrgKernel *kernel);

/**
 * # Safety
 * `kernel` must be a live handle.
 */
uint64_t mrg_kernel_n_max(const struct MrgKernel *kernel);

/**
 * n-step mass q_n(x); for the renewal model the coordinates are ignored.
 *
 * # Safety
 * `kernel` must be a live handle and `out` a valid pointer.
 */
enum MrgStatus mrg_kernel_mass(const struct MrgKernel *kernel,
                               uint64_t n,
                               int64_t x0,
                               int64_t x1,
                               double *out);

/**
 * Mass outside the retained window at step n.
 *
 * # Safety
 * `kernel` must be a live handle and `out` a valid pointer.
 */
enum MrgStatus mrg_kernel_tail_mass(const struct MrgKernel *kernel, uint64_t n, double *out);

/**
 * Build the replica-overlap table of a kernel.
 *
 * # Safety
 * `kernel` must be a live handle; `out` receives an owned handle to free
 * with `mrg_overlap_free`.
 */
enum MrgStatus mrg_overlap_build(const struct MrgKernel *kernel, struct MrgOverlap **out);

/**
 * # Safety
 * `overlap` must be a handle from this library, or null (no-op).
 */
void mrg_overlap_free(struct MrgOverlap *overlap);

/**
 * Per-step overlap r_n.
 *
 * # Safety
 * `overlap` must be a live handle and `out` a valid pointer.
 */
enum MrgStatus mrg_overlap_r(const struct MrgOverlap *overlap, uint64_t n, double *out);

/**
 * Prefix sum R_n.
 *
 * # Safety
 * `overlap` must be a live handle and `out` a valid pointer.
 */
enum MrgStatus mrg_overlap_total(const struct MrgOverlap *overlap, uint64_t n, double *out);

/**
 * beta_N = beta_hat / sqrt(R_N).
 *
 * # Safety
 * `overlap` must be a live handle and `out` a valid pointer.
 */
enum MrgStatus mrg_beta_schedule(const struct MrgOverlap *overlap,
                                 uint64_t n,
                                 double beta_hat,
                                 double *out);

/**
 * Equal-overlap block boundaries t_0 = 0 < t_1 <= ... <= t_M = N, written
 * as M + 1 values into `out`.
 *
 * # Safety
 * `overlap` must be a live handle; `out` must point to `out_len` writable
 * u64 slots.
 */
enum MrgStatus mrg_block_boundaries(const struct MrgOverlap *overlap,
                                    uint64_t n,
                                    uint64_t m,
                                    uint64_t *out,
                                    size_t out_len);

/**
 * Scale separation of two space-time points: |||X - X'||| and the overlap
 * fraction zeta = R_{|||X - X'|||} / R_N.
 *
 * # Safety
 * `overlap` must be a live handle; `out_norm` and `out_zeta` valid pointers.
 */
enum MrgStatus mrg_triple_norm_zeta(const struct MrgOverlap *overlap,
                                    uint64_t n,
                                    int64_t ax0,
                                    int64_t ax1,
                                    uint64_t at,
                                    int64_t bx0,
                                    int64_t bx1,
                                    uint64_t bt,
                                    uint64_t *out_norm,
                                    double *out_zeta);

/**
 * Exact E[Z^2] from the overlap-chain recursion, with disorder strength
 * `beta` and eta-variance `var_eta` (pass 1 for the unit normalization).
 *
 * # Safety
 * `overlap` must be a live handle and `out` a valid pointer.
 */
enum MrgStatus mrg_second_moment_exact(const struct MrgOverlap *overlap,
                                       double beta,
                                       double var_eta,
                                       uint64_t n,
                                       double *out);

/**
 * Exact E[Z(X) Z(X')] for two starting points.
 *
 * # Safety
 * `kernel` and `overlap` must be live handles over the same model; `out`
 * must be a valid pointer.
 */
enum MrgStatus mrg_cross_moment_exact(const struct MrgKernel *kernel,
                                      const struct MrgOverlap *overlap,
                                      double beta,
                                      double var_eta,
                                      uint64_t n,
                                      int64_t ax0,
                                      int64_t ax1,
                                      uint64_t at,
                                      int64_t bx0,
                                      int64_t bx1,
                                      uint64_t bt,
                                      double *out);

/**
 * sigma^2 of the weak-disorder log-normal limit.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum MrgStatus mrg_sigma_sq(double beta_hat, double *out);

/**
 * Limiting covariance of log partition functions at scale separation zeta.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum MrgStatus mrg_cov_limit(double beta_hat, double zeta, double *out);

/**
 * Noise-strength schedule beta_eps of the regularized 2d heat equation.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum MrgStatus mrg_beta_eps(double eps, double beta_hat, double *out);

/**
 * One pinning partition function Z(start) under the seeded disorder field
 * (law tags: 0 Gaussian, 1 Rademacher, 2 direct standard-Gaussian eta).
 *
 * # Safety
 * `kernel` must be a live renewal-model handle and `out` a valid pointer.
 */
enum MrgStatus mrg_pinning_partition(const struct MrgKernel *kernel,
                                     uint64_t n,
                                     double beta,
                                     uint64_t seed,
                                     uint64_t realization,
                                     uint8_t law_tag,
                                     uint64_t start,
                                     double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MARGINAL_H */
