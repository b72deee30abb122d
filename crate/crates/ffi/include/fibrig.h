#ifndef FIBRIG_H
#define FIBRIG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a call.
typedef enum FibrigStatus {
  FIBRIG_STATUS_OK = 0,
  FIBRIG_STATUS_NULL_POINTER = 1,
  FIBRIG_STATUS_INVALID_ARGUMENT = 2,
  FIBRIG_STATUS_COMPUTATION = 3,
  FIBRIG_STATUS_IO = 4,
  FIBRIG_STATUS_PANIC = 5,
} FibrigStatus;

// Deformation field handle.
typedef struct FibrigField FibrigField;

// Fiber layout handle.
typedef struct FibrigLayout FibrigLayout;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// Valid until the next call on the same thread.
const char *fibrig_last_error(void);

// Library version as a static NUL-terminated string.
const char *fibrig_version(void);

// Periodic layout with cell size `num/den`.
//
// # Safety
// `out` must be a valid pointer.
enum FibrigStatus fibrig_layout_new(uint64_t num,
                                    uint64_t den,
                                    double alpha,
                                    double delta,
                                    struct FibrigLayout **out);

// # Safety
// `layout` must come from [`fibrig_layout_new`] or be null.
void fibrig_layout_free(struct FibrigLayout *layout);

// Whether `x` (3 doubles) lies in the rigid fibers.
//
// # Safety
// Pointers must be valid; `x` holds 3 doubles.
enum FibrigStatus fibrig_layout_is_rigid(const struct FibrigLayout *layout,
                                         const double *x,
                                         bool *out);

// Number of cells whose closure lies in the rectangle `omega = (x0, y0, x1, y1)`.
//
// # Safety
// Pointers must be valid; `omega` holds 4 doubles.
enum FibrigStatus fibrig_layout_interior_cells(const struct FibrigLayout *layout,
                                               const double *omega,
                                               size_t *out);

// Limit deformation of a named preset on its default domain.
//
// # Safety
// `name` must be NUL-terminated; `out` must be valid.
enum FibrigStatus fibrig_limit_new(const char *name, struct FibrigField **out);

// Exact sequence member `u_ε` of a named preset for the given layout,
// with zero translation.
//
// # Safety
// Pointers must be valid; `name` must be NUL-terminated.
enum FibrigStatus fibrig_sequence_new(const char *name,
                                      const struct FibrigLayout *layout,
                                      struct FibrigField **out);

// # Safety
// `field` must come from a `fibrig_*_new` constructor or be null.
void fibrig_field_free(struct FibrigField *field);

// Writes `u(x)` to `out` (3 doubles).
//
// # Safety
// Pointers must be valid.
enum FibrigStatus fibrig_field_eval(const struct FibrigField *field, const double *x, double *out);

// Writes `∇u(x)` to `out` (9 doubles, row-major); finite differences with
// step `h` when the field has no closed-form gradient.
//
// # Safety
// Pointers must be valid.
enum FibrigStatus fibrig_field_gradient(const struct FibrigField *field,
                                        const double *x,
                                        double h,
                                        double *out);

// `dist(F, SO(3))` of a row-major 3×3 matrix; NaN for a null pointer.
//
// # Safety
// `f` must hold 9 doubles.
double fibrig_dist_so3(const double *f);

// Nearest rotation of a row-major 3×3 matrix with positive determinant.
//
// # Safety
// `f` and `out` must hold 9 doubles.
enum FibrigStatus fibrig_project_so3(const double *f, double *out);

// Lower bound of the neighboring-rotation estimate.
//
// # Safety
// `a1`, `a2` hold 9 doubles each; `out` is valid.
enum FibrigStatus fibrig_lemma31_rhs(double p,
                                     double l1,
                                     double l2,
                                     double l3,
                                     double m,
                                     const double *a1,
                                     const double *a2,
                                     double *out);

// Runs the listed acceptance criteria (all when `n == 0`) with the default
// configuration, or with `config_toml` when non-null. The JSON report is
// returned in `out_json` (release with [`fibrig_string_free`]) and
// `passed` receives the overall verdict.
//
// # Safety
// `ids` holds `n` values; `config_toml` is null or NUL-terminated;
// `out_json` and `passed` are valid.
enum FibrigStatus fibrig_verify_json(const uint32_t *ids,
                                     size_t n,
                                     const char *config_toml,
                                     char **out_json,
                                     bool *passed);

// Releases a string returned by this library.
//
// # Safety
// `s` must come from this library or be null.
void fibrig_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FIBRIG_H */
