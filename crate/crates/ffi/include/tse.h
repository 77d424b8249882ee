#ifndef TSE_H
#define TSE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TseStatus {
  TSE_STATUS_OK = 0,
  TSE_STATUS_IO = 1,
  TSE_STATUS_CONFIG = 2,
  TSE_STATUS_DATA = 3,
  TSE_STATUS_NUMERICAL = 4,
  TSE_STATUS_NULL_POINTER = 5,
  TSE_STATUS_PANIC = 6,
} TseStatus;

/*
 A speed or density grid: `m` cells by `t` time steps, row-major by cell.
 */
typedef struct TseGrid TseGrid;

/*
 A trained model loaded from a checkpoint.
 */
typedef struct TseModel TseModel;

typedef struct TseMetrics {
  size_t test_cells;
  double test_mse;
  double test_rmse;
  double test_mae;
  /*
   Percent; NaN when undefined.
   */
  double test_mape;
  /*
   Zero when nothing is observed.
   */
  size_t train_cells;
  double train_rmse;
  double train_mae;
} TseMetrics;

typedef struct TseCalibration {
  size_t pairs;
  double v_f;
  double rho_m;
  double rmse;
  double r2;
} TseCalibration;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *tse_version(void);

/*
 Copies the calling thread's last error message into `buf` (NUL-terminated,
 truncated to `len`) and returns the full message length in bytes.
 `buf` may be null to query the length.

 # Safety
 `buf` must be null or point to `len` writable bytes.
 */
size_t tse_last_error(char *buf, size_t len);

/*
 Builds a grid from `m * t` row-major values with spacings `dx` (m) and
 `dt` (s).

 # Safety
 `values` must point to `m * t` readable doubles; `out` must be writable.
 */
enum TseStatus tse_grid_new(const double *values,
                            size_t m,
                            size_t t,
                            double dx,
                            double dt,
                            struct TseGrid **out);

/*
 Reads a grid CSV file.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum TseStatus tse_grid_load(const char *path, struct TseGrid **out);

/*
 Writes a grid CSV file.

 # Safety
 `grid` must be a live handle and `path` a NUL-terminated string.
 */
enum TseStatus tse_grid_save(const struct TseGrid *grid, const char *path);

/*
 # Safety
 `grid` must be a live handle; `m` and `t` must be writable.
 */
enum TseStatus tse_grid_shape(const struct TseGrid *grid, size_t *m, size_t *t);

/*
 Copies the row-major values into `buf`, which must hold exactly `m * t`
 doubles.

 # Safety
 `grid` must be a live handle and `buf` must point to `len` writable doubles.
 */
enum TseStatus tse_grid_values(const struct TseGrid *grid, double *buf, size_t len);

/*
 Releases a grid. Null is ignored.

 # Safety
 `grid` must be null or a handle not yet freed.
 */
void tse_grid_free(struct TseGrid *grid);

/*
 Simulates the built-in LWR scenario (21 cells by 600 steps). `density_out`
 may be null.

 # Safety
 `speed_out` must be writable; `density_out` must be null or writable.
 */
enum TseStatus tse_simulate_default(struct TseGrid **speed_out, struct TseGrid **density_out);

/*
 Loads a model checkpoint.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum TseStatus tse_model_load(const char *path, struct TseModel **out);

/*
 Predicted speed (m/s) at position `x` (m) and time `t` (s).

 # Safety
 `model` must be a live handle; `out` must be writable.
 */
enum TseStatus tse_model_speed_at(const struct TseModel *model, double x, double t, double *out);

/*
 Predicted speed field on the model's training grid.

 # Safety
 `model` must be a live handle; `out` must be writable.
 */
enum TseStatus tse_model_predict(const struct TseModel *model, struct TseGrid **out);

/*
 Releases a model. Null is ignored.

 # Safety
 `model` must be null or a handle not yet freed.
 */
void tse_model_free(struct TseModel *model);

/*
 Scores `pred` against `truth` under the observation mask drawn from
 `rate` and `mask_seed`.

 # Safety
 `pred` and `truth` must be live handles; `out` must be writable.
 */
enum TseStatus tse_evaluate(const struct TseGrid *pred,
                            const struct TseGrid *truth,
                            double rate,
                            uint64_t mask_seed,
                            struct TseMetrics *out);

/*
 Least-squares Greenshields fit to `n` density (veh/m) and speed (m/s) pairs.

 # Safety
 `density` and `speed` must each point to `n` readable doubles; `out` must
 be writable.
 */
enum TseStatus tse_calibrate(const double *density,
                             const double *speed,
                             size_t n,
                             struct TseCalibration *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TSE_H */
