/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef AQCAST_H
#define AQCAST_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes; the non-zero values match the CLI exit codes, plus
// `AQ_STATUS_PANIC` for an internal fault.
typedef enum AqStatus {
  AQ_STATUS_OK = 0,
  AQ_STATUS_USAGE = 1,
  AQ_STATUS_DATA = 2,
  AQ_STATUS_NUMERICAL = 3,
  AQ_STATUS_PANIC = 4,
} AqStatus;

// Fitted ARIMA model.
typedef struct AqArima AqArima;

// Trained residual network.
typedef struct AqResidualModel AqResidualModel;

// Test-split metrics. `has_r2` is 0 when R² is undefined.
typedef struct AqMetrics {
  double mse;
  double rmse;
  double mae;
  double r2;
  int32_t has_r2;
} AqMetrics;

// Fitness callback for [`aq_optimize`]: returns the objective at `x`
// (`dim` values). A non-finite return marks the point infeasible.
typedef double (*AqFitnessFn)(const double *x, size_t dim, void *user_data);

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Valid until
// the next call into the library on this thread.
const char *aq_last_error(void);

// Library version as a static NUL-terminated string.
const char *aq_version(void);

// Decompose `y` (`n` values) with the given seasonal period and default
// smoother settings. Each output buffer holds `n` values.
enum AqStatus aq_decompose(const double *y,
                           size_t n,
                           size_t period,
                           double *trend,
                           double *seasonal,
                           double *residual);

// MSE, RMSE, MAE and R² of `y_hat` against `y`.
enum AqStatus aq_metrics(const double *y, const double *y_hat, size_t n, struct AqMetrics *out);

// Fit ARIMA(p, d, q) by conditional sum of squares.
enum AqStatus aq_arima_fit(const double *y,
                           size_t n,
                           size_t p,
                           size_t d,
                           size_t q,
                           struct AqArima **out);

enum AqStatus aq_arima_load(const char *path, struct AqArima **out);

enum AqStatus aq_arima_save(const struct AqArima *model, const char *path);

// Multi-step forecast continuing the fitted series; writes `horizon` values.
enum AqStatus aq_arima_forecast(const struct AqArima *model, size_t horizon, double *out);

// Coefficients. `phi` must hold `p` values and `theta` `q` values; any
// output pointer may be NULL to skip it.
enum AqStatus aq_arima_coefficients(const struct AqArima *model,
                                    double *phi,
                                    double *theta,
                                    double *intercept,
                                    double *sigma2);

void aq_arima_free(struct AqArima *model);

// Train the residual network on `n` values. `config_json` is a JSON
// network config (missing fields take defaults) or NULL for defaults.
enum AqStatus aq_residual_fit(const double *residual,
                              size_t n,
                              const char *config_json,
                              struct AqResidualModel **out);

enum AqStatus aq_residual_load(const char *path, struct AqResidualModel **out);

enum AqStatus aq_residual_save(const struct AqResidualModel *model, const char *path);

// Input window length the model expects.
enum AqStatus aq_residual_window(const struct AqResidualModel *model, size_t *out);

// One-step prediction from the last `len` values (`len` must equal the
// model window). `attention`, if not NULL, receives `len` weights.
enum AqStatus aq_residual_predict(const struct AqResidualModel *model,
                                  const double *window,
                                  size_t len,
                                  double *out,
                                  double *attention);

void aq_residual_free(struct AqResidualModel *model);

// Minimize `fitness` over the box `[lower, upper]` (`dim` continuous
// dimensions). `config_json` is a JSON optimizer config or NULL. Writes
// the best point to `best_x` (`dim` values) and its value to `best_f`.
enum AqStatus aq_optimize(const double *lower,
                          const double *upper,
                          size_t dim,
                          const char *config_json,
                          AqFitnessFn fitness,
                          void *user_data,
                          double *best_x,
                          double *best_f);

// Full forecast pipeline over `n_inputs` CSV paths, writing artifacts to
// `out_dir`. `config_path` (TOML) may be NULL for defaults.
enum AqStatus aq_forecast_run(const char *config_path,
                              const char *const *inputs,
                              size_t n_inputs,
                              const char *out_dir,
                              struct AqMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AQCAST_H */
