/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef HM_GALERKIN_H
#define HM_GALERKIN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes shared by all entry points.
typedef enum HmStatus {
  HM_STATUS_OK = 0,
  HM_STATUS_NULL_POINTER = 1,
  HM_STATUS_INVALID_ARGUMENT = 2,
  HM_STATUS_OUT_OF_RANGE = 3,
  HM_STATUS_DOMAIN = 4,
  HM_STATUS_NUMERIC = 5,
  HM_STATUS_CONFIG = 6,
  HM_STATUS_IO = 7,
  HM_STATUS_FORMAT = 8,
  HM_STATUS_BUFFER_TOO_SMALL = 9,
  HM_STATUS_PANIC = 10,
} HmStatus;

typedef enum HmGeometryKind {
  HM_GEOMETRY_KIND_DISK = 0,
  HM_GEOMETRY_KIND_SQUARE = 1,
} HmGeometryKind;

typedef enum HmGrowthKind {
  // `θ ≡ 1`.
  HM_GROWTH_KIND_CONSTANT = 0,
  // `θ(p) = ln(1 + p)`.
  HM_GROWTH_KIND_LOG = 1,
  // `θ(p) = p^β`.
  HM_GROWTH_KIND_POWER = 2,
} HmGrowthKind;

typedef enum HmVerdict {
  HM_VERDICT_DIVERGENT = 0,
  HM_VERDICT_CONVERGENT = 1,
  HM_VERDICT_INCONCLUSIVE = 2,
} HmVerdict;

// Opaque eigenbasis handle.
typedef struct HmBasis HmBasis;

// Opaque handle to a finished run.
typedef struct HmRun HmRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL
// terminated, truncated to `len`). Returns the full message length
// without the terminator, or 0 when there is no error.
//
// # Safety
// `buf` must be valid for `len` bytes or null (with `len == 0`).
uintptr_t hm_last_error_message(char *buf, uintptr_t len);

// Library version as a static NUL-terminated string.
const char *hm_version(void);

// `k`-th positive zero of `J_m` (`k` is 1-based).
//
// # Safety
// `out` must point to writable memory for one `double`.
enum HmStatus hm_bessel_zero(uint32_t m, uint32_t k, double *out);

// Builds the first `n` Dirichlet eigenfunctions on a disk of radius
// `size` or a square of side `size`.
//
// # Safety
// `out` must point to writable memory for one pointer.
enum HmStatus hm_basis_new(enum HmGeometryKind kind,
                           double size,
                           uintptr_t n,
                           struct HmBasis **out);

// Number of modes, 0 for a null handle.
//
// # Safety
// `basis` must be null or a live handle from [`hm_basis_new`].
uintptr_t hm_basis_len(const struct HmBasis *basis);

// Copies the Dirichlet eigenvalues `μ_i` into `out[0..len]`.
//
// # Safety
// `basis` must be a live handle; `out` must hold `len` doubles.
enum HmStatus hm_basis_eigenvalues(const struct HmBasis *basis, double *out, uintptr_t len);

// Releases a basis handle; null is ignored.
//
// # Safety
// `basis` must be null or a handle not yet freed.
void hm_basis_free(struct HmBasis *basis);

// `Φ_θ(r)`; `beta` is used by [`HmGrowthKind::Power`] only.
//
// # Safety
// `out` must point to writable memory for one `double`.
enum HmStatus hm_phi_theta(enum HmGrowthKind kind, double beta, double r, double *out);

// Osgood divergence verdict for a growth function.
//
// # Safety
// `out` must point to writable memory for one [`HmVerdict`].
enum HmStatus hm_osgood_verdict(enum HmGrowthKind kind, double beta, enum HmVerdict *out);

// Runs the configuration file at `config_path` in memory (no output
// files are written).
//
// # Safety
// `config_path` must be a NUL-terminated string; `out` must point to
// writable memory for one pointer.
enum HmStatus hm_run_config_file(const char *config_path, struct HmRun **out);

// Number of modes of a run, 0 for null.
//
// # Safety
// `run` must be null or a live handle.
uintptr_t hm_run_len(const struct HmRun *run);

// Terminal time and coefficients of a run; `coeffs` must hold
// [`hm_run_len`] doubles.
//
// # Safety
// `run` must be a live handle; `time` one double; `coeffs` `len` doubles.
enum HmStatus hm_run_terminal_state(const struct HmRun *run,
                                    double *time,
                                    double *coeffs,
                                    uintptr_t len);

// `‖φ‖_V²` of the terminal state.
//
// # Safety
// `run` must be a live handle; `out` one double.
enum HmStatus hm_run_terminal_norm_v2(const struct HmRun *run, double *out);

// Releases a run handle; null is ignored.
//
// # Safety
// `run` must be null or a handle not yet freed.
void hm_run_free(struct HmRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HM_GALERKIN_H */
