#ifndef UAVFEDSIM_H
#define UAVFEDSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum UfsStatus {
  UFS_STATUS_OK = 0,
  UFS_STATUS_NULL_POINTER = 1,
  UFS_STATUS_INVALID_ARGUMENT = 2,
  UFS_STATUS_IO = 3,
  UFS_STATUS_CONFIG = 4,
  UFS_STATUS_NUMERIC = 5,
  UFS_STATUS_INTERNAL = 6,
} UfsStatus;

/**
 * Values accepted by `ufs_run_mission`.
 */
typedef enum UfsStrategy {
  UFS_STRATEGY_OPTIMIZED = 0,
  UFS_STRATEGY_NO_COV = 1,
  UFS_STRATEGY_BARYCENTER = 2,
  UFS_STRATEGY_RECTANGULAR = 3,
  UFS_STRATEGY_IDEAL = 4,
} UfsStrategy;

/**
 * Opaque validated configuration.
 */
typedef struct UfsConfig UfsConfig;

/**
 * Opaque metrics log of one mission.
 */
typedef struct UfsLog UfsLog;

typedef struct UfsPerFit {
  double b1;
  double b2;
  double max_abs_error;
} UfsPerFit;

typedef struct UfsLogRow {
  uint64_t round;
  uint64_t community;
  double mean_val_acc;
  double cov;
  uint64_t scheduled;
  uint64_t succeeded;
  double cum_distance;
} UfsLogRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *ufs_last_error_message(void);

/**
 * Library version, a static NUL-terminated string.
 */
const char *ufs_version(void);

enum UfsStatus ufs_config_default(struct UfsConfig **out);

enum UfsStatus ufs_config_load(const char *path, struct UfsConfig **out);

/**
 * Releases a config; null is ignored.
 */
void ufs_config_free(struct UfsConfig *cfg);

/**
 * Elevation angle in degrees of a UAV at `altitude` seen from a device.
 */
double ufs_elevation_angle(double uav_x, double uav_y, double altitude, double dev_x, double dev_y);

/**
 * Average packet error rate between the UAV and a device under `cfg`.
 */
enum UfsStatus ufs_per_upper_bound(const struct UfsConfig *cfg,
                                   double uav_x,
                                   double uav_y,
                                   double dev_x,
                                   double dev_y,
                                   double *out);

enum UfsStatus ufs_fit_per(const struct UfsConfig *cfg, struct UfsPerFit *out);

/**
 * Optimal schedule for a row-major `steps x devices` reward matrix.
 * `out_schedule` receives `steps * devices` bytes (1 = served).
 */
enum UfsStatus ufs_solve_schedule(const double *rewards,
                                  size_t steps,
                                  size_t devices,
                                  size_t max_per_step,
                                  uint8_t *out_schedule,
                                  double *out_value);

/**
 * Runs a full mission. `strategy` takes a `UfsStrategy` value.
 */
enum UfsStatus ufs_run_mission(const struct UfsConfig *cfg,
                               int32_t strategy,
                               uint64_t seed,
                               struct UfsLog **out);

/**
 * Number of rows (rounds x communities); 0 for a null log.
 */
size_t ufs_log_num_rows(const struct UfsLog *log);

enum UfsStatus ufs_log_row(const struct UfsLog *log, size_t index, struct UfsLogRow *out);

/**
 * Writes the log in the CLI's metrics CSV format.
 */
enum UfsStatus ufs_log_write_csv(const struct UfsLog *log, const char *path);

/**
 * Releases a log; null is ignored.
 */
void ufs_log_free(struct UfsLog *log);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UAVFEDSIM_H */
