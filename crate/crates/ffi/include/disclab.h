#ifndef DISCLAB_H
#define DISCLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DisclabStatus {
  DISCLAB_STATUS_OK = 0,
  DISCLAB_STATUS_NULL_POINTER = 1,
  DISCLAB_STATUS_DOMAIN = 2,
  DISCLAB_STATUS_CONVERGENCE = 3,
  DISCLAB_STATUS_BUDGET = 4,
  DISCLAB_STATUS_ZERO_HIT = 5,
  DISCLAB_STATUS_CHAIN_NON_CONVERGENCE = 6,
  DISCLAB_STATUS_NOT_FINITE = 7,
  DISCLAB_STATUS_DIMENSION_MISMATCH = 8,
  DISCLAB_STATUS_BUFFER_TOO_SMALL = 9,
  DISCLAB_STATUS_INTERNAL = 10,
  DISCLAB_STATUS_PANIC = 11,
} DisclabStatus;

typedef enum DisclabRegion {
  DISCLAB_REGION_UNSAT = 0,
  DISCLAB_REGION_UNKNOWN = 1,
  DISCLAB_REGION_SAT = 2,
} DisclabRegion;

// Opaque symmetric matrix handle.
typedef struct DisclabSymMatrix DisclabSymMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Static description of a status code.
const char *disclab_status_str(enum DisclabStatus status);

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length without the NUL.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
size_t disclab_last_error(char *buf, size_t len);

// Builds a matrix from its upper triangle in row-major order
// (`len` = d(d+1)/2).
//
// # Safety
// `upper` must be valid for `len` reads; `result` must be writable.
enum DisclabStatus disclab_sym_matrix_from_upper(size_t d,
                                                 const double *upper,
                                                 size_t len,
                                                 struct DisclabSymMatrix **result);

// Samples GOE(d) from the stream (seed, index).
//
// # Safety
// `result` must be writable.
enum DisclabStatus disclab_sym_matrix_goe(size_t d,
                                          uint64_t seed,
                                          uint64_t index,
                                          struct DisclabSymMatrix **result);

// Releases a handle; null is ignored.
//
// # Safety
// `m` must come from this library and not be used afterwards.
void disclab_sym_matrix_free(struct DisclabSymMatrix *m);

// # Safety
// `m` must be a live handle; `dim` must be writable.
enum DisclabStatus disclab_sym_matrix_dim(const struct DisclabSymMatrix *m, size_t *dim);

// # Safety
// `m` must be a live handle; `result` must be writable.
enum DisclabStatus disclab_op_norm(const struct DisclabSymMatrix *m, double *result);

// Ascending eigenvalues into `values` (capacity `len` ≥ d).
//
// # Safety
// `m` must be a live handle; `values` must be valid for `len` writes.
enum DisclabStatus disclab_eigenvalues(const struct DisclabSymMatrix *m,
                                       double *values,
                                       size_t len);

// Exact Z_κ and discrepancy for an instance of `n` handles.
//
// # Safety
// `ms` must point to `n` live handles; `z` and `disc` must be writable.
enum DisclabStatus disclab_exact_count(const struct DisclabSymMatrix *const *ms,
                                       size_t n,
                                       double kappa,
                                       uint64_t *z,
                                       double *disc);

// First-moment threshold τ₁(κ), κ ∈ (0, 2].
//
// # Safety
// `result` must be writable.
enum DisclabStatus disclab_tau1(double kappa, double *result);

// Second-moment threshold τ₂(κ).
//
// # Safety
// `result` must be writable.
enum DisclabStatus disclab_tau2(double kappa, double *result);

// Second-moment failure curve τ_f(κ).
//
// # Safety
// `result` must be writable.
enum DisclabStatus disclab_tau_f(double kappa, double *result);

// Large-deviation rate of P[‖W‖_op ≤ κ] at scale d².
//
// # Safety
// `result` must be writable.
enum DisclabStatus disclab_rate_opnorm(double kappa, double *result);

// Density ρ_κ(x) for |x| < κ.
//
// # Safety
// `result` must be writable.
enum DisclabStatus disclab_rho_kappa(double kappa, double x, double *result);

// 2⁻ⁿ Σ_l C(n,l) exp(n c q_l²/2).
//
// # Safety
// `result` must be writable.
enum DisclabStatus disclab_laplace_quadratic(double c, size_t n, double *result);

// Phase-diagram region of (κ, τ) and whether τ < τ_f(κ).
//
// # Safety
// `region` and `second_moment_fails` must be writable.
enum DisclabStatus disclab_classify(double kappa,
                                    double tau,
                                    enum DisclabRegion *region,
                                    bool *second_moment_fails);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DISCLAB_H */
