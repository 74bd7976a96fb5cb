#ifndef HETREG_H
#define HETREG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result codes of every fallible call.
typedef enum HetregStatus {
  HETREG_STATUS_OK = 0,
  HETREG_STATUS_NULL_POINTER = 1,
  HETREG_STATUS_INVALID_INPUT = 2,
  HETREG_STATUS_INSUFFICIENT_DATA = 3,
  HETREG_STATUS_RANK_DEFICIENT = 4,
  HETREG_STATUS_DEGENERATE_FIT = 5,
  HETREG_STATUS_NEED_TWO_GROUPS = 6,
  HETREG_STATUS_DIMENSION_MISMATCH = 7,
  HETREG_STATUS_NOT_SYMMETRIC = 8,
  HETREG_STATUS_NOT_POSITIVE_DEFINITE = 9,
  HETREG_STATUS_NUMERICALLY_SINGULAR = 10,
  HETREG_STATUS_INTERNAL_CONSISTENCY = 11,
  HETREG_STATUS_PANIC = 99,
} HetregStatus;

// Monte Carlo engine selector.
typedef enum HetregEngine {
  HETREG_ENGINE_FIDUCIAL = 0,
  HETREG_ENGINE_GENERALIZED = 1,
} HetregEngine;

// How the fiducial side of a coupled draw reuses the normal draws `V`.
typedef enum HetregCoupling {
  // `V` as drawn.
  HETREG_COUPLING_SHARED = 0,
  // `V` rotated by the polar factor of `D* P`; equal to `Q_G*` draw by draw.
  HETREG_COUPLING_ROTATED = 1,
} HetregCoupling;

// Fitted groups together with Q0.
typedef struct HetregAnalysis HetregAnalysis;

// Groups collected before fitting.
typedef struct HetregDataset HetregDataset;

// Monte Carlo p-value with its binomial standard error.
typedef struct HetregMcResult {
  double p_value;
  uint64_t exceedances;
  uint64_t draws;
  uint64_t seed;
  double std_error;
} HetregMcResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. Valid until the
// next failing call on the same thread.
const char *hetreg_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *hetreg_version(void);

// `P(χ²_df > x)`. Returns NaN for `df == 0`.
double hetreg_chi2_sf(double x, uint32_t df);

struct HetregDataset *hetreg_dataset_new(void);

// # Safety
// `ds` must be NULL or a handle from [`hetreg_dataset_new`] not yet freed.
void hetreg_dataset_free(struct HetregDataset *ds);

// Appends one group. `design` is row-major `n x p`, `response` has `n`
// entries, `label` may be NULL (a label `g<index>` is used).
//
// # Safety
// `design` and `response` must point to `n * p` and `n` readable doubles.
enum HetregStatus hetreg_dataset_add_group(struct HetregDataset *ds,
                                           const char *label,
                                           const double *design,
                                           uintptr_t n,
                                           uintptr_t p,
                                           const double *response);

// # Safety
// `ds` must be a live dataset handle.
uintptr_t hetreg_dataset_group_count(const struct HetregDataset *ds);

// Fits every group and computes Q0. On success `*out` receives a new handle.
//
// # Safety
// `ds` must be a live dataset handle and `out` a valid pointer.
enum HetregStatus hetreg_analysis_new(const struct HetregDataset *ds, struct HetregAnalysis **out);

// # Safety
// `a` must be NULL or a handle from [`hetreg_analysis_new`] not yet freed.
void hetreg_analysis_free(struct HetregAnalysis *a);

// Q0, or NaN for a NULL handle.
//
// # Safety
// `a` must be NULL or a live analysis handle.
double hetreg_analysis_q0(const struct HetregAnalysis *a);

// Chi-square degrees of freedom `p (k - 1)`, or 0 for a NULL handle.
//
// # Safety
// `a` must be NULL or a live analysis handle.
uintptr_t hetreg_analysis_df(const struct HetregAnalysis *a);

// Number of coefficients per group, or 0 for a NULL handle.
//
// # Safety
// `a` must be NULL or a live analysis handle.
uintptr_t hetreg_analysis_p(const struct HetregAnalysis *a);

// # Safety
// `a` must be a live analysis handle and `out` a valid pointer.
enum HetregStatus hetreg_analysis_chi2_pvalue(const struct HetregAnalysis *a, double *out);

// Fiducial or generalized Monte Carlo p-value with `draws` draws under `seed`.
//
// # Safety
// `a` must be a live analysis handle and `out` a valid pointer.
enum HetregStatus hetreg_analysis_mc_pvalue(const struct HetregAnalysis *a,
                                            enum HetregEngine engine,
                                            uintptr_t draws,
                                            uint64_t seed,
                                            struct HetregMcResult *out);

// Largest relative gap `|Q_G* - Q_F| / max(1, Q_F)` over `draws` coupled draws.
//
// # Safety
// `a` must be a live analysis handle and `out` a valid pointer.
enum HetregStatus hetreg_analysis_coupled_max_discrepancy(const struct HetregAnalysis *a,
                                                          enum HetregCoupling coupling,
                                                          uintptr_t draws,
                                                          uint64_t seed,
                                                          double *out);

// Copies group `index`'s coefficient estimates (`p` doubles) and residual variance.
//
// # Safety
// `beta_out` must have room for `p` doubles; `s2_out` must be valid.
enum HetregStatus hetreg_analysis_group(const struct HetregAnalysis *a,
                                        uintptr_t index,
                                        double *beta_out,
                                        double *s2_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HETREG_H */
