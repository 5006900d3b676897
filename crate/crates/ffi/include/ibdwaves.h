#ifndef IBDWAVES_H
#define IBDWAVES_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes shared by every entry point.
typedef enum {
  IBD_STATUS_OK = 0,
  IBD_STATUS_NULL_POINTER = 1,
  IBD_STATUS_INVALID_PARAMETER = 2,
  IBD_STATUS_DOMAIN = 3,
  IBD_STATUS_NO_CONVERGENCE = 4,
  IBD_STATUS_NONEXISTENCE = 5,
  IBD_STATUS_UNSTABLE = 6,
  IBD_STATUS_BUFFER_TOO_SMALL = 7,
  IBD_STATUS_PANIC = 8,
} IbdStatus;

// Which travelling wave to compute.
typedef enum {
  IBD_WAVE_KIND_FPTW = 0,
  IBD_WAVE_KIND_UPTW = 1,
  IBD_WAVE_KIND_LPTW = 2,
} IbdWaveKind;

// Which field of a profile or simulation to read.
typedef enum {
  IBD_FIELD_M = 0,
  IBD_FIELD_I = 1,
} IbdField;

// Model parameters.
typedef struct IbdParams IbdParams;

// A computed travelling wave.
typedef struct IbdProfile IbdProfile;

// Snapshots of a simulation of the reduced system.
typedef struct IbdSimulation IbdSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the last error message into `buf` (NUL terminated, truncated to
// `len`). Returns the full message length, or 0 when there is none.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
uintptr_t ibd_last_error(char *buf, uintptr_t len);

// Library version as a static NUL-terminated string.
const char *ibd_version(void);

// Create parameters from the raw rates.
//
// # Safety
// `out` must be valid for a pointer write.
IbdStatus ibd_params_new(double alpha2,
                         double beta1,
                         double beta2,
                         double delta,
                         double diffusivity,
                         IbdParams **out);

// Create parameters with unit rates at the given σ and δ.
//
// # Safety
// `out` must be valid for a pointer write.
IbdStatus ibd_params_unit_rates(double sigma, double delta, IbdParams **out);

// Release parameters. Null is ignored.
//
// # Safety
// `params` must come from this library and not be freed twice.
void ibd_params_free(IbdParams *params);

// Read σ, a and b.
//
// # Safety
// `params` must be a live handle; the out pointers must be writable.
IbdStatus ibd_params_derived(const IbdParams *params, double *sigma, double *a, double *b);

// Leading-order minimum speed of the upper wave at `sigma` (> 1). The
// parameters' β₁ is adjusted to match `sigma`.
//
// # Safety
// `params` must be a live handle and `out` writable.
IbdStatus ibd_uptw_min_speed(const IbdParams *params, double sigma, double *out);

// Leading-order minimum speed of the lower wave at `sigma` (> 1).
//
// # Safety
// `params` must be a live handle and `out` writable.
IbdStatus ibd_lptw_min_speed(const IbdParams *params, double sigma, double *out);

// Leading-order speed of the full wave at `sigma` (< 1) by shooting.
//
// # Safety
// `params` must be a live handle and `out` writable.
IbdStatus ibd_fptw_speed(const IbdParams *params, double sigma, double tol, double *out);

// Solve the full travelling-wave system for the wave of the given kind at
// the parameters' δ. Upper and lower waves are returned at their minimum
// speed.
//
// # Safety
// `params` must be a live handle and `out` writable.
IbdStatus ibd_profile_solve(const IbdParams *params,
                            IbdWaveKind kind,
                            double sigma,
                            IbdProfile **out);

// Release a profile. Null is ignored.
//
// # Safety
// `profile` must come from this library and not be freed twice.
void ibd_profile_free(IbdProfile *profile);

// Number of grid points and wave speed.
//
// # Safety
// `profile` must be a live handle; the out pointers must be writable.
IbdStatus ibd_profile_info(const IbdProfile *profile, uintptr_t *len, double *speed);

// Copy the travelling coordinate and both fields into caller buffers of
// capacity `cap`. Any buffer may be null to skip it.
//
// # Safety
// `profile` must be a live handle; non-null buffers must hold `cap` doubles.
IbdStatus ibd_profile_copy(const IbdProfile *profile,
                           double *z,
                           double *m,
                           double *i,
                           uintptr_t cap);

// Simulate the reduced system from a step initial condition (`m0`, `i0` on
// x < 0) on `n` points over [`x_min`, `x_max`] until `t_end`, storing a
// snapshot every `interval`.
//
// # Safety
// `params` must be a live handle and `out` writable.
IbdStatus ibd_simulate(const IbdParams *params,
                       double m0,
                       double i0,
                       double x_min,
                       double x_max,
                       uintptr_t n,
                       double t_end,
                       double interval,
                       IbdSimulation **out);

// Release a simulation. Null is ignored.
//
// # Safety
// `sim` must come from this library and not be freed twice.
void ibd_simulation_free(IbdSimulation *sim);

// Number of grid points and snapshots.
//
// # Safety
// `sim` must be a live handle; the out pointers must be writable.
IbdStatus ibd_simulation_info(const IbdSimulation *sim, uintptr_t *points, uintptr_t *snapshots);

// Copy one field of the final snapshot into `buf` of capacity `cap`.
//
// # Safety
// `sim` must be a live handle and `buf` valid for `cap` doubles.
IbdStatus ibd_simulation_final(const IbdSimulation *sim,
                               IbdField field,
                               double *buf,
                               uintptr_t cap);

// Fitted speed of the rightmost crossing of `level` by `field`, using the
// trailing `fit_window` fraction of the snapshots.
//
// # Safety
// `sim` must be a live handle and `out` writable.
IbdStatus ibd_simulation_front_speed(const IbdSimulation *sim,
                                     IbdField field,
                                     double level,
                                     double fit_window,
                                     double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IBDWAVES_H */
