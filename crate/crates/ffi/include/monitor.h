#ifndef MONITOR_H
#define MONITOR_H

/* Generated from src/lib.rs by cbindgen; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Outcome of a call.
typedef enum MonitorStatus {
  MONITOR_STATUS_OK = 0,
  MONITOR_STATUS_NULL_POINTER = 1,
  MONITOR_STATUS_INVALID_ARGUMENT = 2,
  MONITOR_STATUS_UNSUPPORTED = 3,
  MONITOR_STATUS_NUMERICAL = 4,
  MONITOR_STATUS_INSUFFICIENT_DATA = 5,
  MONITOR_STATUS_CONFIG = 6,
  MONITOR_STATUS_IO = 7,
  MONITOR_STATUS_BUFFER_TOO_SMALL = 8,
  MONITOR_STATUS_PANIC = 9,
} MonitorStatus;

// Experiment configuration (opaque).
typedef struct MonitorConfig MonitorConfig;

// Number-basis pure state (opaque).
typedef struct MonitorFockState MonitorFockState;

// Estimator kernel (opaque).
typedef struct MonitorKernel MonitorKernel;

// Measurement record of one site (opaque).
typedef struct MonitorRecord MonitorRecord;

// Single-site steady state and filter constants.
typedef struct MonitorSteadyState {
  double v_x;
  double v_p;
  double u;
  // Memory time `τ = 1/(2Γ v_x)`.
  double tau;
  // Filter damping rate `1/τ`.
  double decay_rate;
  // Filter oscillation frequency `Γ h0 τ`.
  double frequency;
} MonitorSteadyState;

// Means and symmetrized central second moments.
typedef struct MonitorMoments {
  double mean_x;
  double mean_p;
  double v_x;
  double v_p;
  double u;
} MonitorMoments;

// Pooled postselected recovery.
typedef struct MonitorRecovery {
  double value;
  // Standard error of `value`.
  double std_error;
  size_t n_used;
  double excluded_fraction;
} MonitorRecovery;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null if none. The
// pointer stays valid until the next failing call on the same thread.
const char *monitor_last_error(void);

// Library version as a static NUL-terminated string.
const char *monitor_version(void);

// Closed-form single-site steady state at onsite energy `h0 > 0` and
// measurement rate `gamma > 0`.
//
// # Safety
// `out` must be valid for writing one [`MonitorSteadyState`].
enum MonitorStatus monitor_steady_state_single(double h0,
                                               double gamma,
                                               struct MonitorSteadyState *out);

// Simulates one Gaussian single-site trajectory from the vacuum and
// returns its record. The noise stream is that of trajectory
// `trajectory_index` under `master_seed`.
//
// # Safety
// `out` must be valid for writing one pointer. The returned handle is owned
// by the caller and must be released with [`monitor_record_free`].
enum MonitorStatus monitor_record_simulate_single(double h0,
                                                  double gamma,
                                                  double dt,
                                                  double t_final,
                                                  uint64_t master_seed,
                                                  uint64_t trajectory_index,
                                                  struct MonitorRecord **out);

// Wraps `n_steps` caller-supplied increments on the grid `t = k·dt`.
//
// # Safety
// `increments` must be valid for `n_steps` reads; `out` for writing one
// pointer. Release the handle with [`monitor_record_free`].
enum MonitorStatus monitor_record_from_increments(double dt,
                                                  const double *increments,
                                                  size_t n_steps,
                                                  struct MonitorRecord **out);

// Number of increments in the record.
//
// # Safety
// `record` must be a live handle; `out` valid for one write.
enum MonitorStatus monitor_record_len(const struct MonitorRecord *record, size_t *out);

// Copies the increments into `buf`, which must hold at least
// [`monitor_record_len`] values.
//
// # Safety
// `record` must be a live handle; `buf` valid for `len` writes.
enum MonitorStatus monitor_record_copy(const struct MonitorRecord *record, double *buf, size_t len);

// Releases a record. Null is accepted.
//
// # Safety
// `record` must be null or a handle not yet freed.
void monitor_record_free(struct MonitorRecord *record);

// Closed-form single-site `x` estimator kernel on step `dt`.
//
// # Safety
// `out` must be valid for writing one pointer. Release the handle with
// [`monitor_kernel_free`].
enum MonitorStatus monitor_kernel_analytic_single(double h0,
                                                  double gamma,
                                                  double dt,
                                                  struct MonitorKernel **out);

// Number of lags in the kernel support.
//
// # Safety
// `kernel` must be a live handle; `out` valid for one write.
enum MonitorStatus monitor_kernel_len(const struct MonitorKernel *kernel, size_t *out);

// Estimator `gain·Σ K·dI` at time `t_obs` (which must lie on the record
// grid).
//
// # Safety
// `kernel` and `record` must be live handles; `out` valid for one write.
enum MonitorStatus monitor_kernel_estimate(const struct MonitorKernel *kernel,
                                           const struct MonitorRecord *record,
                                           double t_obs,
                                           double *out);

// Releases a kernel. Null is accepted.
//
// # Safety
// `kernel` must be null or a handle not yet freed.
void monitor_kernel_free(struct MonitorKernel *kernel);

// Number state `|n⟩` in a basis of `dim` levels.
//
// # Safety
// `out` must be valid for writing one pointer. Release the handle with
// [`monitor_fock_free`].
enum MonitorStatus monitor_fock_number(size_t n, size_t dim, struct MonitorFockState **out);

// Equal superposition `(|m⟩ + |n⟩)/√2` in a basis of `dim` levels.
//
// # Safety
// `out` must be valid for writing one pointer. Release the handle with
// [`monitor_fock_free`].
enum MonitorStatus monitor_fock_superposition(size_t m,
                                              size_t n,
                                              size_t dim,
                                              struct MonitorFockState **out);

// Evolves `state` under continuous `x` measurement for `t_final` and
// returns the final state and the emitted record. The basis grows when the
// state reaches the truncation.
//
// # Safety
// `state` must be a live handle; `out_state` and `out_record` valid for
// writing one pointer each (`out_record` may be null to discard the
// record). Release the results with [`monitor_fock_free`] and
// [`monitor_record_free`].
enum MonitorStatus monitor_fock_evolve(const struct MonitorFockState *state,
                                       double h0,
                                       double gamma,
                                       double dt,
                                       double t_final,
                                       uint64_t master_seed,
                                       uint64_t trajectory_index,
                                       struct MonitorFockState **out_state,
                                       struct MonitorRecord **out_record);

// Basis size of the state.
//
// # Safety
// `state` must be a live handle; `out` valid for one write.
enum MonitorStatus monitor_fock_dim(const struct MonitorFockState *state, size_t *out);

// Quadrature means and central second moments of the state.
//
// # Safety
// `state` must be a live handle; `out` valid for one write.
enum MonitorStatus monitor_fock_moments(const struct MonitorFockState *state,
                                        struct MonitorMoments *out);

// Releases a number-basis state. Null is accepted.
//
// # Safety
// `state` must be null or a handle not yet freed.
void monitor_fock_free(struct MonitorFockState *state);

// Conditional variance recovered from `n` (estimator, measured) pairs with
// `n_bins` equal-width estimator bins; bins with fewer than `min_count`
// samples are excluded.
//
// # Safety
// `estimators` and `measured` must be valid for `n` reads; `out` for one
// write.
enum MonitorStatus monitor_recover_variance(const double *estimators,
                                            const double *measured,
                                            size_t n,
                                            size_t n_bins,
                                            size_t min_count,
                                            struct MonitorRecovery *out);

// Default experiment configuration.
//
// # Safety
// `out` must be valid for writing one pointer. Release the handle with
// [`monitor_config_free`].
enum MonitorStatus monitor_config_default(struct MonitorConfig **out);

// Parses a configuration from sectioned text or JSON.
//
// # Safety
// `text` must be a NUL-terminated string; `out` valid for writing one
// pointer. Release the handle with [`monitor_config_free`].
enum MonitorStatus monitor_config_parse(const char *text, struct MonitorConfig **out);

// Sets `section.key` to `value`.
//
// # Safety
// `config` must be a live handle; `key` and `value` NUL-terminated strings.
enum MonitorStatus monitor_config_set(struct MonitorConfig *config,
                                      const char *key,
                                      const char *value);

// Writes the NUL-terminated SHA-256 hex digest of the canonical
// configuration text (65 bytes) into `buf`.
//
// # Safety
// `config` must be a live handle; `buf` valid for `len` writes.
enum MonitorStatus monitor_config_hash(const struct MonitorConfig *config, char *buf, size_t len);

// Runs a pipeline (`simulate`, `steady-state`, `filter-analytic`,
// `filter-design`, `postselect` or `husimi`) and writes its tables and
// sidecar into `out_dir`, or into the configured output path when
// `out_dir` is null.
//
// # Safety
// `config` must be a live handle; `pipeline` a NUL-terminated string;
// `out_dir` null or a NUL-terminated string.
enum MonitorStatus monitor_run_pipeline(const struct MonitorConfig *config,
                                        const char *pipeline,
                                        const char *out_dir);

// Releases a configuration. Null is accepted.
//
// # Safety
// `config` must be null or a handle not yet freed.
void monitor_config_free(struct MonitorConfig *config);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MONITOR_H */
