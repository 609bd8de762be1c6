#ifndef LANGEVIN_COUPLING_H
#define LANGEVIN_COUPLING_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LcStatus {
  LC_STATUS_OK = 0,
  LC_STATUS_NULL_POINTER = 1,
  LC_STATUS_INVALID_ARGUMENT = 2,
  LC_STATUS_DIMENSION_MISMATCH = 3,
  LC_STATUS_NON_FINITE = 4,
  LC_STATUS_INTERNAL = 5,
  LC_STATUS_PANIC = 6,
} LcStatus;

typedef enum LcSeries {
  LC_SERIES_GRID = 0,
  LC_SERIES_MEAN_ABS_Z = 1,
  LC_SERIES_SE_ABS_Z = 2,
  LC_SERIES_MEAN_SQRT_FZ = 3,
  LC_SERIES_SE_SQRT_FZ = 4,
  LC_SERIES_MEAN_FZ = 5,
  LC_SERIES_ENVELOPE = 6,
} LcSeries;

typedef struct LcPotential LcPotential;

typedef struct LcSchedule LcSchedule;

typedef struct LcSimulation LcSimulation;

typedef struct LcCertificateResult {
  /**
   * 1 when the certificate held on every sampled pair.
   */
  int32_t pass;
  /**
   * Smallest near-field margin; NaN when no near pair was sampled.
   */
  double worst_near_margin;
  /**
   * Smallest far-field margin; NaN when no far pair was sampled.
   */
  double worst_far_margin;
  size_t n_pairs;
} LcCertificateResult;

typedef struct LcConstants {
  double horizon;
  double nu;
  double c0;
  double c1;
  double dist;
  double m_xx;
  double kl_bound;
  double alpha;
  double beta;
  double c_of_t;
  double j_value;
} LcConstants;

typedef struct LcSimulationSummary {
  double coupled_fraction_at_t;
  double max_sup_z;
  size_t n_sup_exceed;
  double girsanov_integral;
  double girsanov_se;
  double kl_mc;
  double kl_mc_se;
  double kl_bound;
  size_t n_paths;
  size_t n_diverged;
  /**
   * 1 when the diverged fraction exceeded the threshold.
   */
  int32_t failed;
} LcSimulationSummary;

typedef struct LcRenyiEstimate {
  double value;
  double ci_lo;
  double ci_hi;
  double theorem_bound;
  int32_t heavy_tail;
} LcRenyiEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failing call on this thread, or null.
 */
const char *lc_last_error_message(void);

enum LcStatus lc_potential_quadratic(size_t dim, double kappa, struct LcPotential **out_potential);

enum LcStatus lc_potential_double_well(size_t dim, struct LcPotential **out_potential);

/**
 * Builds a potential by name (`"quadratic"`, `"double_well"`). Parameter
 * names and values are parallel arrays of length `n_params`.
 */
enum LcStatus lc_potential_from_name(const char *name,
                                     size_t dim,
                                     const char *const *param_names,
                                     const double *param_values,
                                     size_t n_params,
                                     struct LcPotential **out_potential);

/**
 * # Safety
 * `p` must come from an `lc_potential_*` constructor and not be freed twice.
 */
void lc_potential_free(struct LcPotential *p);

enum LcStatus lc_potential_grad(const struct LcPotential *p,
                                const double *x,
                                size_t dim,
                                double *out_grad);

/**
 * Samples pairs in the ball of radius `radius` (`radius <= 0` selects the
 * default) and checks the far-field convexity certificate `(m, M, R)`.
 */
enum LcStatus lc_verify_certificate(const struct LcPotential *p,
                                    double m,
                                    double big_m,
                                    double r,
                                    size_t n_pairs,
                                    double radius,
                                    uint64_t seed,
                                    struct LcCertificateResult *out_result);

enum LcStatus lc_lyapunov_eval(double c_f, double r_f, double r, double *out_value);

enum LcStatus lc_schedule_new(double m,
                              double big_m,
                              double r,
                              double horizon,
                              double dist,
                              struct LcSchedule **out_schedule);

/**
 * # Safety
 * `s` must come from [`lc_schedule_new`] and not be freed twice.
 */
void lc_schedule_free(struct LcSchedule *s);

enum LcStatus lc_schedule_constants(const struct LcSchedule *s, struct LcConstants *out_constants);

enum LcStatus lc_schedule_renyi_bound(const struct LcSchedule *s, double q, double *out_value);

enum LcStatus lc_schedule_eta(const struct LcSchedule *s, double t, double *out_value);

enum LcStatus lc_schedule_envelope(const struct LcSchedule *s, double t, double *out_value);

enum LcStatus lc_schedule_moment_integral(const struct LcSchedule *s,
                                          uint32_t k,
                                          double *out_value);

/**
 * Runs the coupled simulation from `x0`, `x0_prime` (each `dim` doubles)
 * under the certificate `(m, M, R)`.
 */
enum LcStatus lc_simulate(const struct LcPotential *p,
                          double m,
                          double big_m,
                          double r,
                          const double *x0,
                          const double *x0_prime,
                          size_t dim,
                          double horizon,
                          double dt,
                          size_t n_paths,
                          uint64_t seed,
                          size_t grid_stride,
                          struct LcSimulation **out_simulation);

/**
 * # Safety
 * `s` must come from [`lc_simulate`] and not be freed twice.
 */
void lc_simulation_free(struct LcSimulation *s);

enum LcStatus lc_simulation_grid_len(const struct LcSimulation *s, size_t *out_len);

/**
 * Copies one recorded series into `buf`, which must hold `grid_len` doubles.
 */
enum LcStatus lc_simulation_series(const struct LcSimulation *s,
                                   enum LcSeries which,
                                   double *buf,
                                   size_t buf_len);

enum LcStatus lc_simulation_summary(const struct LcSimulation *s,
                                    struct LcSimulationSummary *out_summary);

enum LcStatus lc_simulation_renyi(const struct LcSimulation *s,
                                  double q,
                                  size_t resamples,
                                  uint64_t seed,
                                  struct LcRenyiEstimate *out_estimate);

/**
 * Donsker–Varadhan slack for discrete distributions of length `n`.
 */
enum LcStatus lc_dv_slack(const double *p,
                          const double *r,
                          const double *phi,
                          size_t n,
                          double *out_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LANGEVIN_COUPLING_H */
