#ifndef BEAMSPLIT_H
#define BEAMSPLIT_H

#include <stdbool.h>
#include <stddef.h>

typedef enum BsStatus {
  BS_STATUS_OK = 0,
  BS_STATUS_NULL_POINTER = 1,
  BS_STATUS_INVALID_ARGUMENT = 2,
  BS_STATUS_SINGULAR = 3,
  BS_STATUS_IO = 4,
  BS_STATUS_PARSE = 5,
  BS_STATUS_PANIC = 6,
} BsStatus;

/**
 * Array, subcarrier grid, dictionary and solver settings.
 */
typedef struct BsEstimator BsEstimator;

/**
 * Output of one estimation call.
 */
typedef struct BsResult BsResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *bs_version(void);

/**
 * Copies the last error message of this thread into `buf`, truncating to
 * `len - 1` bytes. Returns the full message length.
 */
size_t bs_last_error(char *buf, size_t len);

/**
 * Creates an estimator for a half-wavelength array and a centered subcarrier grid.
 */
enum BsStatus bs_estimator_new(size_t n_antennas,
                               double carrier_hz,
                               double bandwidth_hz,
                               size_t n_subcarriers,
                               size_t grid_size,
                               struct BsEstimator **out);

void bs_estimator_free(struct BsEstimator *est);

/**
 * Sets the iteration cap and relative convergence tolerance.
 */
enum BsStatus bs_estimator_set_iterations(struct BsEstimator *est, size_t max_iters, double tol);

/**
 * Runs the estimator. `beamformer` is `n_pilots x n_antennas`, `received` is
 * `n_pilots x n_subcarriers`.
 */
enum BsStatus bs_estimate(const struct BsEstimator *est,
                          const double *beamformer,
                          const double *received,
                          size_t n_pilots,
                          struct BsResult **out);

void bs_result_free(struct BsResult *res);

/**
 * Estimated direction in sine space.
 */
enum BsStatus bs_result_direction(const struct BsResult *res, double *out);

/**
 * Maximum iteration count over subcarriers and whether all of them converged.
 */
enum BsStatus bs_result_iterations(const struct BsResult *res, size_t *iterations, bool *converged);

/**
 * Writes one split per subcarrier into `out[0..len]`.
 */
enum BsStatus bs_result_splits(const struct BsResult *res, double *out, size_t len);

/**
 * Writes the `n_antennas x n_subcarriers` channel estimate, interleaved, into
 * `out[0..len]` with `len = 2 * n_antennas * n_subcarriers`.
 */
enum BsStatus bs_result_channel(const struct BsResult *res, double *out, size_t len);

/**
 * Far-field steering vector at `freq_hz` for sine-space direction `sine`,
 * interleaved into `out[0..2 * n_antennas]`.
 */
enum BsStatus bs_steering_far(const struct BsEstimator *est,
                              double sine,
                              double freq_hz,
                              double *out,
                              size_t len);

/**
 * Single-path far-field bound at `freq_hz`: direction variance in rad^2 and
 * split variance in sine space.
 */
enum BsStatus bs_crb_far(const struct BsEstimator *est,
                         const double *beamformer,
                         size_t n_pilots,
                         double angle_rad,
                         double split,
                         double power,
                         double noise_var,
                         double freq_hz,
                         double *out_direction,
                         double *out_split);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BEAMSPLIT_H */
