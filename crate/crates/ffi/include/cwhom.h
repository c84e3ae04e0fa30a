#ifndef CWHOM_H
#define CWHOM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Lineshape family selector for [`CwhomLineshape`].
 */
typedef enum CwhomLineshapeKind {
  CWHOM_LINESHAPE_KIND_LORENTZIAN = 0,
  CWHOM_LINESHAPE_KIND_RECTANGULAR = 1,
  CWHOM_LINESHAPE_KIND_GAUSSIAN = 2,
  CWHOM_LINESHAPE_KIND_FM_TRIANGLE = 3,
} CwhomLineshapeKind;

/**
 * Result of every fallible call.
 */
typedef enum CwhomStatus {
  CWHOM_STATUS_OK = 0,
  CWHOM_STATUS_NULL_POINTER = 1,
  CWHOM_STATUS_INVALID_ARGUMENT = 2,
  CWHOM_STATUS_CONFIG = 3,
  CWHOM_STATUS_NO_CONVERGENCE = 4,
  CWHOM_STATUS_IO = 5,
  CWHOM_STATUS_FORMAT = 6,
  CWHOM_STATUS_NUMERICAL = 7,
  CWHOM_STATUS_BUFFER_TOO_SMALL = 8,
  CWHOM_STATUS_PANIC = 9,
} CwhomStatus;

/**
 * Converged fringe fit.
 */
typedef struct CwhomFit CwhomFit;

/**
 * Analytic coincidence-probability model.
 */
typedef struct CwhomFringeModel CwhomFringeModel;

/**
 * Coincidence histogram with its wing-normalized fringe.
 */
typedef struct CwhomHistogram CwhomHistogram;

/**
 * Photon timestamps of a simulated run.
 */
typedef struct CwhomRun CwhomRun;

/**
 * Plain-data lineshape. `width` is the FWHM (Lorentzian, Gaussian), the
 * full width (rectangular) or the intrinsic FWHM (FM triangle);
 * `mod_rate` and `deviation` are used by the FM triangle only. Hz.
 */
typedef struct CwhomLineshape {
  enum CwhomLineshapeKind kind;
  double width;
  double mod_rate;
  double deviation;
} CwhomLineshape;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *cwhom_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cwhom_version(void);

/**
 * Normalized first-order coherence of a closed-form lineshape at delay `tau` (s).
 *
 * # Safety
 * `lineshape` and `out` must be valid pointers.
 */
enum CwhomStatus cwhom_g1(const struct CwhomLineshape *lineshape, double tau, double *out);

/**
 * Creates a fringe model. `delta_omega` is in rad/s; `classical` rejects
 * visibilities above 0.5.
 *
 * # Safety
 * Pointer arguments must be valid; `*out` receives a handle to free with
 * [`cwhom_fringe_model_free`].
 */
enum CwhomStatus cwhom_fringe_model_new(double visibility,
                                        const struct CwhomLineshape *lineshape_1,
                                        const struct CwhomLineshape *lineshape_2,
                                        double delta_omega,
                                        bool classical,
                                        struct CwhomFringeModel **out);

/**
 * Coincidence probability at relative delay `delta_t` (s).
 *
 * # Safety
 * `model` must come from [`cwhom_fringe_model_new`]; `out` must be valid.
 */
enum CwhomStatus cwhom_fringe_model_eval(const struct CwhomFringeModel *model,
                                         double delta_t,
                                         double *out);

/**
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void cwhom_fringe_model_free(struct CwhomFringeModel *model);

/**
 * Simulates the experiment described by the `[experiment]` section of a
 * TOML configuration.
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string; `*out` receives a handle
 * to free with [`cwhom_run_free`].
 */
enum CwhomStatus cwhom_run_new(const char *config_toml, struct CwhomRun **out);

/**
 * Number of events on channel 0 (A) or 1 (B); 0 for other channels.
 *
 * # Safety
 * `run` must be NULL or a live handle.
 */
size_t cwhom_run_event_count(const struct CwhomRun *run, uint32_t channel);

/**
 * Copies a channel's picosecond timestamps into `buffer`, which must
 * hold at least [`cwhom_run_event_count`] entries.
 *
 * # Safety
 * `buffer` must point to `capacity` writable `uint64_t`.
 */
enum CwhomStatus cwhom_run_copy_events(const struct CwhomRun *run,
                                       uint32_t channel,
                                       uint64_t *buffer,
                                       size_t capacity);

/**
 * Simulated duration, seconds.
 *
 * # Safety
 * `run` must be NULL or a live handle.
 */
double cwhom_run_duration(const struct CwhomRun *run);

/**
 * # Safety
 * `run` must be NULL or a handle not yet freed.
 */
void cwhom_run_free(struct CwhomRun *run);

/**
 * Correlates two sorted picosecond timestamp streams. When the histogram
 * allows it, the outer-half wing normalization is computed too.
 *
 * # Safety
 * `events_a`/`events_b` must point to `len_a`/`len_b` values; `*out`
 * receives a handle to free with [`cwhom_histogram_free`].
 */
enum CwhomStatus cwhom_correlate(const uint64_t *events_a,
                                 size_t len_a,
                                 const uint64_t *events_b,
                                 size_t len_b,
                                 uint64_t bin_width_ps,
                                 uint64_t window_ps,
                                 struct CwhomHistogram **out);

/**
 * Number of bins.
 *
 * # Safety
 * `hist` must be NULL or a live handle.
 */
size_t cwhom_histogram_bins(const struct CwhomHistogram *hist);

/**
 * Copies raw counts, and optionally bin centres (s), into caller buffers
 * of at least [`cwhom_histogram_bins`] entries. Either buffer may be NULL.
 *
 * # Safety
 * Non-NULL buffers must hold `capacity` writable elements.
 */
enum CwhomStatus cwhom_histogram_copy(const struct CwhomHistogram *hist,
                                      uint64_t *counts,
                                      double *centers,
                                      size_t capacity);

/**
 * # Safety
 * `hist` must be NULL or a handle not yet freed.
 */
void cwhom_histogram_free(struct CwhomHistogram *hist);

/**
 * Fits the normalized fringe with an effective Lorentzian
 * (`V`, `tau_c`, baseline free). `free_delta_omega` also fits the beat
 * frequency.
 *
 * # Safety
 * `hist` must be a live handle; `*out` receives a handle to free with
 * [`cwhom_fit_free`].
 */
enum CwhomStatus cwhom_fit_effective_lorentzian(const struct CwhomHistogram *hist,
                                                bool free_delta_omega,
                                                struct CwhomFit **out);

/**
 * Fits with the physical model built from two fixed lineshapes
 * (`V` and baseline free, `delta_omega` free when requested).
 *
 * # Safety
 * As [`cwhom_fit_effective_lorentzian`]; lineshape pointers must be valid.
 */
enum CwhomStatus cwhom_fit_physical(const struct CwhomHistogram *hist,
                                    const struct CwhomLineshape *lineshape_1,
                                    const struct CwhomLineshape *lineshape_2,
                                    bool free_delta_omega,
                                    struct CwhomFit **out);

/**
 * Looks up a fitted parameter by name (`visibility`, `tau_c`,
 * `delta_omega`, `baseline`, `width_1`, `width_2`).
 *
 * # Safety
 * `fit` must be a live handle; `name` NUL-terminated; `value`/`sigma`
 * valid or NULL.
 */
enum CwhomStatus cwhom_fit_parameter(const struct CwhomFit *fit,
                                     const char *name,
                                     double *value,
                                     double *sigma);

/**
 * Reduced chi-square of the fit; NaN for a NULL handle.
 *
 * # Safety
 * `fit` must be NULL or a live handle.
 */
double cwhom_fit_reduced_chi2(const struct CwhomFit *fit);

/**
 * # Safety
 * `fit` must be NULL or a handle not yet freed.
 */
void cwhom_fit_free(struct CwhomFit *fit);

/**
 * Runs a named preset end to end, writing artifacts into `out_dir`.
 * `seed` 0 keeps the preset's seeds; `duration` <= 0 keeps its duration.
 *
 * # Safety
 * `name` and `out_dir` must be NUL-terminated strings.
 */
enum CwhomStatus cwhom_preset_run(const char *name,
                                  uint64_t seed,
                                  double duration,
                                  const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CWHOM_H */
