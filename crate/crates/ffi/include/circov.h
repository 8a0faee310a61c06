/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef CIRCOV_H
#define CIRCOV_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. Zero is success.
typedef enum CircovStatus {
  CIRCOV_STATUS_OK = 0,
  CIRCOV_STATUS_NULL_POINTER = 1,
  CIRCOV_STATUS_INVALID_UTF8 = 2,
  // Malformed or unsupported scenario text.
  CIRCOV_STATUS_SCENARIO = 3,
  // Parameters that parse but cannot be used.
  CIRCOV_STATUS_CONFIG = 4,
  CIRCOV_STATUS_GEOMETRY = 5,
  // The grid cannot resolve the domain.
  CIRCOV_STATUS_RESOLUTION = 6,
  // Bars could not split the domain into one region per agent.
  CIRCOV_STATUS_DECOMPOSITION = 7,
  // Any other simulation failure.
  CIRCOV_STATUS_SIMULATION = 8,
  // The caller's buffer is too small; the required length is reported.
  CIRCOV_STATUS_BUFFER_TOO_SMALL = 9,
  // The simulation has reached its horizon.
  CIRCOV_STATUS_FINISHED = 10,
  // No data yet (targets before the first step).
  CIRCOV_STATUS_NOT_READY = 11,
  CIRCOV_STATUS_PANIC = 12,
} CircovStatus;

// Opaque domain handle.
typedef struct CircovDomain CircovDomain;

// Opaque simulation handle.
typedef struct CircovSimulation CircovSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or NULL if none. The
// pointer stays valid until the next failing call on the same thread.
const char *circov_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *circov_version(void);

// Builds a simulation from scenario TOML text. Output settings in the
// scenario are ignored; nothing is written to disk.
//
// # Safety
// `scenario_toml` must be NULL or a NUL-terminated string; `out` must be
// NULL or point to writable storage for one handle.
enum CircovStatus circov_simulation_new(const char *scenario_toml, struct CircovSimulation **out);

// Releases a simulation. NULL is ignored.
//
// # Safety
// `sim` must be NULL or a handle from [`circov_simulation_new`] that has
// not been freed.
void circov_simulation_free(struct CircovSimulation *sim);

// Advances one step. Returns [`CircovStatus::Finished`] once the horizon
// (or the early-stop rule) has been reached.
//
// # Safety
// `sim` must be NULL or a live handle.
enum CircovStatus circov_simulation_step(struct CircovSimulation *sim);

// Steps until finished or `max_steps` steps have been taken (0 means no
// limit). The number of steps taken is written to `taken` if non-NULL.
//
// # Safety
// `sim` must be NULL or a live handle; `taken` NULL or writable.
enum CircovStatus circov_simulation_run(struct CircovSimulation *sim,
                                        uint64_t max_steps,
                                        uint64_t *taken);

// Simulated time in seconds.
//
// # Safety
// `sim` must be NULL or a live handle; `out` NULL or writable.
enum CircovStatus circov_simulation_time(const struct CircovSimulation *sim, double *out);

// Number of agents (and of bars and subregions).
//
// # Safety
// `sim` must be NULL or a live handle; `out` NULL or writable.
enum CircovStatus circov_simulation_agent_count(const struct CircovSimulation *sim, size_t *out);

// Steps taken so far.
//
// # Safety
// `sim` must be NULL or a live handle; `out` NULL or writable.
enum CircovStatus circov_simulation_step_count(const struct CircovSimulation *sim, uint64_t *out);

// Whether the run has ended.
//
// # Safety
// `sim` must be NULL or a live handle; `out` NULL or writable.
enum CircovStatus circov_simulation_finished(const struct CircovSimulation *sim, bool *out);

// Relative workload imbalance `max|m_i - m̄| / m̄` of the most recent
// decomposition.
//
// # Safety
// `sim` must be NULL or a live handle; `out` NULL or writable.
enum CircovStatus circov_simulation_relative_imbalance(const struct CircovSimulation *sim,
                                                       double *out);

// Agent positions as `x0, y0, x1, y1, …` (2N values).
//
// # Safety
// `sim` must be NULL or a live handle; `buf` must hold `len` doubles;
// `needed` NULL or writable.
enum CircovStatus circov_simulation_positions(const struct CircovSimulation *sim,
                                              double *buf,
                                              size_t len,
                                              size_t *needed);

// Current targets as `x0, y0, …` (2N values); `NOT_READY` before the
// first step.
//
// # Safety
// `sim` must be NULL or a live handle; `buf` must hold `len` doubles;
// `needed` NULL or writable.
enum CircovStatus circov_simulation_targets(const struct CircovSimulation *sim,
                                            double *buf,
                                            size_t len,
                                            size_t *needed);

// Subregion workloads of the most recent decomposition (N values).
//
// # Safety
// `sim` must be NULL or a live handle; `buf` must hold `len` doubles;
// `needed` NULL or writable.
enum CircovStatus circov_simulation_workloads(const struct CircovSimulation *sim,
                                              double *buf,
                                              size_t len,
                                              size_t *needed);

// Bar arc lengths along the inner boundary, counter-clockwise from θ = 0
// (N values).
//
// # Safety
// `sim` must be NULL or a live handle; `buf` must hold `len` doubles;
// `needed` NULL or writable.
enum CircovStatus circov_simulation_bars(const struct CircovSimulation *sim,
                                         double *buf,
                                         size_t len,
                                         size_t *needed);

// The six-lobe case-study domain (inverse ellipse inside a Fourier curve).
//
// # Safety
// `out` must be NULL or writable.
enum CircovStatus circov_domain_case_study(struct CircovDomain **out);

// Concentric circular annulus.
//
// # Safety
// `out` must be NULL or writable.
enum CircovStatus circov_domain_circle(double r_in, double r_out, struct CircovDomain **out);

// Releases a domain. NULL is ignored.
//
// # Safety
// `domain` must be NULL or a live handle.
void circov_domain_free(struct CircovDomain *domain);

// Barrier `h(x, y)`: positive inside, zero on the boundary.
//
// # Safety
// `domain` must be NULL or a live handle; `out` NULL or writable.
enum CircovStatus circov_domain_barrier(const struct CircovDomain *domain,
                                        double x,
                                        double y,
                                        double *out);

// Inner-boundary perimeter in meters.
//
// # Safety
// `domain` must be NULL or a live handle; `out` NULL or writable.
enum CircovStatus circov_domain_perimeter(const struct CircovDomain *domain, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CIRCOV_H */
