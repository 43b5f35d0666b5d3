#ifndef DIRAC_GAP_H
#define DIRAC_GAP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DgStatus {
  DG_STATUS_OK = 0,
  DG_STATUS_NULL_POINTER = 1,
  DG_STATUS_INVALID_ARGUMENT = 2,
  DG_STATUS_CONFIG = 3,
  DG_STATUS_PRECONDITION = 4,
  DG_STATUS_NUMERICAL = 5,
  DG_STATUS_PANIC = 6,
} DgStatus;

/*
 Opaque periodic Dirac system.
 */
typedef struct DgSystem DgSystem;

/*
 Opaque perturbation template.
 */
typedef struct DgTemplate DgTemplate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread; empty after a success.
 The pointer stays valid until the next call into this library on the
 same thread.
 */
const char *dg_last_error_message(void);

/*
 System with a piecewise-constant potential taking `values[i]` on a
 segment of length `lengths[i]`; the period is the total length.

 # Safety
 `lengths` and `values` must point to `n` doubles; `out` must be writable.
 */
enum DgStatus dg_system_new_piecewise(double mass,
                                      const double *lengths,
                                      const double *values,
                                      size_t n,
                                      double coupling,
                                      struct DgSystem **out);

/*
 System from the JSON `system` block of a run config.

 # Safety
 `json` must be a NUL-terminated string; `out` must be writable.
 */
enum DgStatus dg_system_from_json(const char *json, struct DgSystem **out);

/*
 # Safety
 `sys` must come from a `dg_system_*` constructor and not be used afterwards.
 */
void dg_system_free(struct DgSystem *sys);

/*
 # Safety
 `sys` must be a live handle and `out` writable.
 */
enum DgStatus dg_discriminant(const struct DgSystem *sys, double lambda, double *out);

/*
 # Safety
 `sys` must be a live handle and `out` writable.
 */
enum DgStatus dg_quasimomentum(const struct DgSystem *sys, double lambda, double *out);

/*
 # Safety
 `sys` must be a live handle and `out` writable.
 */
enum DgStatus dg_rotation_number(const struct DgSystem *sys,
                                 double lambda,
                                 size_t periods,
                                 double *out);

/*
 Eigenvalues in `(lambda1, lambda2]` on `[a, b]` with boundary angles
 `bc_left`, `bc_right` (condition `u1 sin β + u2 cos β = 0`).

 # Safety
 `sys` must be a live handle; `count` and `error_budget` writable.
 */
enum DgStatus dg_count_interval(const struct DgSystem *sys,
                                double a,
                                double b,
                                double bc_left,
                                double bc_right,
                                double lambda1,
                                double lambda2,
                                uint64_t *count,
                                uint64_t *error_budget);

/*
 `l0(ϱ) = ϱ^(-beta)`.

 # Safety
 `out` must be writable.
 */
enum DgStatus dg_template_inverse_power(double beta, struct DgTemplate **out);

/*
 Linearly interpolated table, held constant outside its range.

 # Safety
 `rho` and `values` must point to `n` doubles; `out` must be writable.
 */
enum DgStatus dg_template_tabulated(const double *rho,
                                    const double *values,
                                    size_t n,
                                    struct DgTemplate **out);

/*
 # Safety
 `t` must come from a `dg_template_*` constructor and not be used afterwards.
 */
void dg_template_free(struct DgTemplate *t);

/*
 Predicted eigenvalues per unit scale in `[lambda1, lambda2]` for the
 background `sys` (zero coupling) perturbed by `l0(r / c)`.
 `regularity_constant` bounds `|l0'| / l0^2` near 0.

 # Safety
 `sys` and `t` must be live handles and `out` writable.
 */
enum DgStatus dg_predicted_density(const struct DgSystem *sys,
                                   const struct DgTemplate *t,
                                   double lambda1,
                                   double lambda2,
                                   double gap_margin,
                                   double regularity_constant,
                                   double *out);

/*
 Eigenvalues in `(lambda1, lambda2]` at scale `c` on the truncated half-line.

 # Safety
 `sys` and `t` must be live handles; `count` and `error_budget` writable.
 */
enum DgStatus dg_count_halfline(const struct DgSystem *sys,
                                const struct DgTemplate *t,
                                double c,
                                double lambda1,
                                double lambda2,
                                double gap_margin,
                                double regularity_constant,
                                uint64_t *count,
                                uint64_t *error_budget);

/*
 Null-terminated version string.
 */
const char *dg_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIRAC_GAP_H */
