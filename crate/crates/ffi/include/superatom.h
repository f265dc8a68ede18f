#ifndef SUPERATOM_H
#define SUPERATOM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SaStatus {
  SA_STATUS_OK = 0,
  SA_STATUS_NULL_POINTER = 1,
  SA_STATUS_INVALID_PARAMETER = 2,
  SA_STATUS_DOMAIN = 3,
  SA_STATUS_INTEGRATION = 4,
  SA_STATUS_ACCURACY = 5,
  SA_STATUS_TRAJECTORY = 6,
  SA_STATUS_INCONSISTENT = 7,
  SA_STATUS_EMPTY = 8,
  SA_STATUS_UNSUPPORTED_ORDER = 9,
  SA_STATUS_IO = 10,
  SA_STATUS_PARSE = 11,
  SA_STATUS_PANIC = 12,
} SaStatus;

/**
 * Detector clicks of a simulated pulse ensemble.
 */
typedef struct SaClickSet SaClickSet;

/**
 * Emitter parameters and probe pulse.
 */
typedef struct SaModel SaModel;

/**
 * Asymptotic correlations of the ideal chiral emitter at three times.
 */
typedef struct SaIdealCorrelations {
  /**
   * Pair correlations for (s1, s2), (s1, s3), (s2, s3).
   */
  double g2[3];
  double g3;
  double g3_connected;
} SaIdealCorrelations;

/**
 * Jacobi coordinates (R, η, ζ) of three times.
 */
typedef struct SaJacobi {
  double r;
  double eta;
  double zeta;
} SaJacobi;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message, NUL terminated and truncated
 * to `capacity`. Returns the full message length in bytes without the NUL.
 *
 * # Safety
 * `buffer` must be null or point to `capacity` writable bytes.
 */
size_t sa_last_error_message(char *buffer, size_t capacity);

/**
 * Creates a model. Rates in µs⁻¹ and times in µs.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for a handle.
 */
enum SaStatus sa_model_new(double kappa,
                           double gamma_r,
                           double gamma_d,
                           double peak_rate,
                           double t_start,
                           double t_end,
                           double ramp,
                           struct SaModel **out);

/**
 * # Safety
 * `model` must be null or a handle from [`sa_model_new`] not yet freed.
 */
void sa_model_free(struct SaModel *model);

/**
 * Input and transmitted photon rates at `n` increasing times.
 *
 * # Safety
 * `model` must be a live handle; the arrays must hold `n` elements.
 */
enum SaStatus sa_model_rates(const struct SaModel *model,
                             const double *times,
                             size_t n,
                             double *input_rate,
                             double *output_rate);

/**
 * Unnormalized order-`order` correlator of the outgoing field; `times` holds `order` entries.
 *
 * # Safety
 * `model` must be a live handle, `times` must hold `order` values, `out` must be writable.
 */
enum SaStatus sa_model_correlator(const struct SaModel *model,
                                  size_t order,
                                  const double *times,
                                  double *out);

/**
 * Normalized order-`order` correlation g⁽ⁿ⁾.
 *
 * # Safety
 * As for [`sa_model_correlator`].
 */
enum SaStatus sa_model_normalized(const struct SaModel *model,
                                  size_t order,
                                  const double *times,
                                  double *out);

/**
 * Runs `n_pulses` quantum-jump trajectories with round-robin detector assignment
 * and no dead time.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum SaStatus sa_simulate(const struct SaModel *model,
                          uint32_t n_pulses,
                          uint64_t seed,
                          double dt_max,
                          uint8_t detectors,
                          struct SaClickSet **out);

/**
 * # Safety
 * `set` must be null or a handle from [`sa_simulate`] not yet freed.
 */
void sa_click_set_free(struct SaClickSet *set);

/**
 * Number of clicks in total across all pulses.
 *
 * # Safety
 * `set` must be a live handle and `out` writable.
 */
enum SaStatus sa_click_set_total(const struct SaClickSet *set, size_t *out);

/**
 * Copies all clicks in pulse order into caller arrays of length `capacity`,
 * which must be at least [`sa_click_set_total`].
 *
 * # Safety
 * `set` must be a live handle; each array must hold `capacity` elements.
 */
enum SaStatus sa_click_set_copy(const struct SaClickSet *set,
                                uint32_t *pulse_ids,
                                double *times,
                                uint8_t *channels,
                                size_t capacity);

/**
 * n-photon outgoing amplitude of the chiral emitter for a gaussian input mode
 * of unit peak amplitude; `coords` holds `n` detection times.
 *
 * # Safety
 * `coords` must hold `n` values; `re` and `im` must be writable.
 */
enum SaStatus sa_bethe_gaussian_wavefunction(size_t n,
                                             double center,
                                             double tau,
                                             double kappa,
                                             const double *coords,
                                             double *re,
                                             double *im);

/**
 * # Safety
 * `out` must be writable.
 */
enum SaStatus sa_ideal_correlations(double s1,
                                    double s2,
                                    double s3,
                                    double kappa,
                                    struct SaIdealCorrelations *out);

/**
 * Connected part of g3 given the three pair correlations.
 *
 * # Safety
 * `g2_pairs` must point to three values.
 */
enum SaStatus sa_connected_g3(double g3, const double *g2_pairs, double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum SaStatus sa_to_jacobi(double s1, double s2, double s3, struct SaJacobi *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SUPERATOM_H */
