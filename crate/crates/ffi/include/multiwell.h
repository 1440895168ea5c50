#ifndef MULTIWELL_H
#define MULTIWELL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MwStatus {
  MW_STATUS_OK = 0,
  MW_STATUS_NULL_POINTER = 1,
  MW_STATUS_INVALID_ARGUMENT = 2,
  MW_STATUS_INVALID_CONFIG = 3,
  MW_STATUS_IO = 4,
  MW_STATUS_NOT_CONVERGED = 5,
  MW_STATUS_OUTSIDE_DOMAIN = 6,
  MW_STATUS_BUFFER_TOO_SMALL = 7,
  MW_STATUS_INTERNAL = 8,
  MW_STATUS_PANIC = 9,
} MwStatus;

/**
 * Field handle.
 */
typedef struct MwField MwField;

/**
 * Potential handle.
 */
typedef struct MwPotential MwPotential;

typedef struct MwSolveInfo {
  int converged;
  double energy;
  double final_residual;
  size_t newton_iters;
  size_t flow_steps;
} MwSolveInfo;

typedef struct MwPohozaev {
  double lhs;
  double rhs;
  double residual;
} MwPohozaev;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *mw_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mw_version(void);

/**
 * Built-in potential by name (`gl-scalar`, `triple-well-2d`).
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MwStatus mw_potential_builtin(const char *name, struct MwPotential **out);

/**
 * Polynomial potential from its JSON specification.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MwStatus mw_potential_from_json(const char *json, struct MwPotential **out);

/**
 * # Safety
 * `p` must come from a potential constructor and not be used afterwards.
 */
void mw_potential_free(struct MwPotential *p);

/**
 * Target dimension `k`, or 0 for a null handle.
 *
 * # Safety
 * `p` must be null or a live handle.
 */
size_t mw_potential_dim(const struct MwPotential *p);

/**
 * Number of wells, or 0 for a null handle.
 *
 * # Safety
 * `p` must be null or a live handle.
 */
size_t mw_potential_num_wells(const struct MwPotential *p);

/**
 * Copies well `i` into `out[0..k]`.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum MwStatus mw_potential_well(const struct MwPotential *p, size_t i, double *out, size_t len);

/**
 * `V(y)` and, when `grad` is non-null, `grad V(y)` into `grad[0..k]`.
 *
 * # Safety
 * `y` must point to `k` doubles, `value` must be valid and `grad` null or
 * `k` writable doubles.
 */
enum MwStatus mw_potential_eval(const struct MwPotential *p,
                                const double *y,
                                size_t k,
                                double *value,
                                double *grad);

/**
 * Reads a field from its JSON header path.
 *
 * # Safety
 * `header_path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MwStatus mw_field_load(const char *header_path, struct MwField **out);

/**
 * Writes `<stem>.json` and `<stem>.bin` (or `<stem>.csv` when `csv` is
 * non-zero).
 *
 * # Safety
 * `f` must be a live handle and `stem` a NUL-terminated string.
 */
enum MwStatus mw_field_save(const struct MwField *f, const char *stem, int csv);

/**
 * # Safety
 * `f` must come from `mw_field_load` or `mw_solve` and not be used
 * afterwards.
 */
void mw_field_free(struct MwField *f);

/**
 * Lattice size `(nx + 1) x (ny + 1)`, components `k` and `eps`.
 *
 * # Safety
 * `f` must be a live handle; the out pointers must be valid.
 */
enum MwStatus mw_field_shape(const struct MwField *f,
                             size_t *nx,
                             size_t *ny,
                             size_t *k,
                             double *eps);

/**
 * Copies the node values, node-major (`out[idx * k + c]`, `idx = j * nx + i`).
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum MwStatus mw_field_values(const struct MwField *f, double *out, size_t len);

/**
 * Solves at one `eps` from a JSON request
 * `{"domain": .., "boundary": .., "epsilon": .., "grid_ratio": .., "solver": {..}}`.
 * A field is returned through `out` whenever the solver produced one,
 * including non-converged runs, which report `NotConverged`.
 *
 * # Safety
 * `p` must be a live handle, `request` a NUL-terminated string, `out` valid
 * and `info` null or valid.
 */
enum MwStatus mw_solve(const struct MwPotential *p,
                       const char *request,
                       struct MwField **out,
                       struct MwSolveInfo *info);

/**
 * Ginzburg-Landau energy of the field over the whole domain.
 *
 * # Safety
 * Handles must be live and `out` valid.
 */
enum MwStatus mw_energy(const struct MwField *f, const struct MwPotential *p, double *out);

/**
 * Pohozaev balance on the disk `D((cx, cy), r)`.
 *
 * # Safety
 * Handles must be live and `out` valid.
 */
enum MwStatus mw_pohozaev(const struct MwField *f,
                          const struct MwPotential *p,
                          double cx,
                          double cy,
                          double r,
                          struct MwPohozaev *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MULTIWELL_H */
