/* C ABI for the divprice library. */

#ifndef DIVPRICE_H
#define DIVPRICE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every entry point.
typedef enum DpStatus {
  DP_STATUS_OK = 0,
  DP_STATUS_NULL_POINTER = 1,
  DP_STATUS_INVALID_ARGUMENT = 2,
  DP_STATUS_PARSE_ERROR = 3,
  DP_STATUS_DOMAIN_ERROR = 4,
  DP_STATUS_PANIC = 5,
} DpStatus;

// Processing order selector for simulation entry points.
typedef enum DpOrdering {
  DP_ORDERING_IDENTITY = 0,
  DP_ORDERING_REVERSE = 1,
  DP_ORDERING_UNIFORM_RANDOM = 2,
} DpOrdering;

// Opaque instance handle: one valuation distribution per agent.
typedef struct DpInstance DpInstance;

// Result of a price calibration.
typedef struct DpCalibration {
  double price;
  double achieved;
  double target;
  double residual;
  // Nonzero when the sold-fraction curve jumps over the target; the
  // price then sits on the side with achieved >= target.
  bool target_unreachable;
} DpCalibration;

// Welfare-ratio estimate.
typedef struct DpWelfareRatio {
  double ratio;
  double ratio_stderr;
  double welfare;
  double optimal_welfare;
} DpWelfareRatio;

// Revenue-gap summary.
typedef struct DpRevenueGap {
  double upper_bound;
  double best_linear_revenue;
  double best_linear_price;
  double gap;
  double kappa;
  double certificate;
  bool regular;
  // Meaningful only when `regular` is true.
  bool certificate_holds;
} DpRevenueGap;

// High-curvature lower-bound instance summary.
typedef struct DpLowerBound {
  double kappa;
  double rho;
  double best_linear_revenue;
  double best_linear_price;
  double nonlinear_revenue;
  double gap;
  double floor;
} DpLowerBound;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// The library version as a newly allocated string; release with
// [`dp_string_free`].
char *dp_version(void);

// The last error message of this thread as a newly allocated string, or
// null when no error occurred; release with [`dp_string_free`].
char *dp_last_error_message(void);

// Release a string allocated by this library.
//
// # Safety
// `s` must come from a divprice function returning `char*` and must not
// have been freed already. Null is ignored.
void dp_string_free(char *s);

// The welfare guarantee constants.
//
// # Safety
// All three output pointers must be valid.
enum DpStatus dp_constants(double *out_beta, double *out_rho1, double *out_rho2);

// Build an instance from a JSON array of agent distribution records (the
// `agents` schema of the experiment configs), e.g.
// `[{"kind":"power","a":1.0,"c":0.5},{"kind":"linear","a":2.0}]`.
//
// # Safety
// `json` must point to a NUL-terminated string and `out` must be a valid
// pointer. On success `*out` owns the instance; release it with
// [`dp_instance_free`].
enum DpStatus dp_instance_from_json(const char *json, struct DpInstance **out);

// Release an instance handle. Null is ignored.
//
// # Safety
// `instance` must come from [`dp_instance_from_json`] and must not have
// been freed already.
void dp_instance_free(struct DpInstance *instance);

// Number of agents in the instance.
//
// # Safety
// `instance` and `out` must be valid pointers.
enum DpStatus dp_instance_agent_count(const struct DpInstance *instance, size_t *out);

// Monte Carlo estimate of the expected sold fraction at `price`.
//
// # Safety
// `instance` must be a live handle; output pointers must be valid
// (`out_stderr` may be null when the caller does not need it).
enum DpStatus dp_sold_fraction(const struct DpInstance *instance,
                               double price,
                               uint64_t samples,
                               uint64_t seed,
                               double *out_mean,
                               double *out_stderr);

// Calibrate the price to a target expected sold fraction.
//
// # Safety
// `instance` must be a live handle and `out` a valid pointer.
enum DpStatus dp_calibrate(const struct DpInstance *instance,
                           double target,
                           uint64_t samples,
                           uint64_t seed,
                           double tolerance,
                           double price_cap,
                           struct DpCalibration *out);

// Estimate the welfare ratio of posted pricing at `price` against the
// welfare optimum.
//
// # Safety
// `instance` must be a live handle and `out` a valid pointer.
enum DpStatus dp_welfare_ratio(const struct DpInstance *instance,
                               double price,
                               enum DpOrdering ordering,
                               uint64_t samples,
                               uint64_t seed,
                               struct DpWelfareRatio *out);

// Ex-ante revenue upper bound, best linear revenue and gap certificate.
//
// # Safety
// `instance` must be a live handle and `out` a valid pointer.
enum DpStatus dp_revenue_gap(const struct DpInstance *instance,
                             size_t grid_m,
                             uint64_t samples,
                             uint64_t seed,
                             struct DpRevenueGap *out);

// Build and evaluate the high-curvature lower-bound instance.
//
// # Safety
// `out` must be a valid pointer.
enum DpStatus dp_lower_bound(double kappa, struct DpLowerBound *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIVPRICE_H */
