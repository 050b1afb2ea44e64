#ifndef QSHUTTLE_H
#define QSHUTTLE_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QsStatus {
  QS_STATUS_OK = 0,
  QS_STATUS_NULL_POINTER = 1,
  QS_STATUS_INVALID_UTF8 = 2,
  QS_STATUS_INVALID_ARGUMENT = 3,
  QS_STATUS_NOT_FOUND = 4,
  QS_STATUS_CONFLICT = 5,
  QS_STATUS_SOLVER_FAILED = 6,
  QS_STATUS_BUFFER_TOO_SMALL = 7,
  QS_STATUS_IO = 8,
  QS_STATUS_PANIC = 99,
} QsStatus;

/**
 * A binary quadratic model.
 */
typedef struct QsBqm QsBqm;

/**
 * A fleet service loaded from a scenario.
 */
typedef struct QsService QsService;

/**
 * A QUBO solver.
 */
typedef struct QsSolver QsSolver;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *qs_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void qs_string_free(char *s);

/**
 * Great-circle distance in metres between two WGS84 points.
 *
 * # Safety
 * `out_m` must be valid for writes.
 */
enum QsStatus qs_haversine_distance(double lat1,
                                    double lon1,
                                    double lat2,
                                    double lon2,
                                    double *out_m);

/**
 * Parses a model in the JSON wire format.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out_bqm` must be valid for writes.
 */
enum QsStatus qs_bqm_from_json(const char *json, struct QsBqm **out_bqm);

/**
 * # Safety
 * `bqm` must come from [`qs_bqm_from_json`] and not have been freed.
 */
void qs_bqm_free(struct QsBqm *bqm);

/**
 * Number of variables, or 0 for a null handle.
 *
 * # Safety
 * `bqm` must be null or a live handle.
 */
size_t qs_bqm_num_variables(const struct QsBqm *bqm);

/**
 * Energy of a 0/1 sample of exactly `num_variables` bytes.
 *
 * # Safety
 * `sample` must point to `len` readable bytes; `out_energy` must be valid
 * for writes.
 */
enum QsStatus qs_bqm_energy(const struct QsBqm *bqm,
                            const uint8_t *sample,
                            size_t len,
                            double *out_energy);

/**
 * Creates a solver by name: `brute`, `sa`, `tabu` or `remote` (the
 * in-process mock).
 *
 * # Safety
 * `kind` must be a NUL-terminated string; `out_solver` must be valid for
 * writes.
 */
enum QsStatus qs_solver_new(const char *kind, struct QsSolver **out_solver);

/**
 * # Safety
 * `solver` must come from [`qs_solver_new`] and not have been freed.
 */
void qs_solver_free(struct QsSolver *solver);

/**
 * Minimises `bqm` within `budget_ms`. The best sample is written to
 * `sample_out`, which must hold `num_variables` bytes.
 *
 * # Safety
 * Handles must be live; `sample_out` must point to `sample_len` writable
 * bytes; `out_energy` must be valid for writes.
 */
enum QsStatus qs_solve(const struct QsSolver *solver,
                       const struct QsBqm *bqm,
                       uint64_t budget_ms,
                       uint64_t seed,
                       uint8_t *sample_out,
                       size_t sample_len,
                       double *out_energy);

/**
 * Builds a fleet service from a scenario JSON document. Events are kept
 * in memory only.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out_service` must be valid
 * for writes.
 */
enum QsStatus qs_service_new(const char *scenario_json,
                             const char *solver_kind,
                             uint64_t seed,
                             struct QsService **out_service);

/**
 * # Safety
 * `service` must come from [`qs_service_new`] and not have been freed.
 */
void qs_service_free(struct QsService *service);

/**
 * Starts a trip and writes its id.
 *
 * # Safety
 * `service` must be live; strings NUL-terminated; `out_trip` writable.
 */
enum QsStatus qs_service_start_trip(const struct QsService *service,
                                    const char *vehicle_id,
                                    const char *line,
                                    double now_s,
                                    uint64_t *out_trip);

/**
 * Ends a trip by hand.
 *
 * # Safety
 * `service` must be live.
 */
enum QsStatus qs_service_end_trip(const struct QsService *service, uint64_t trip_id, double now_s);

/**
 * Records one location fix.
 *
 * # Safety
 * `service` must be live; `vehicle_id` NUL-terminated.
 */
enum QsStatus qs_service_update(const struct QsService *service,
                                const char *vehicle_id,
                                double lat,
                                double lon,
                                double ts);

/**
 * Runs one optimization round and writes the outcome as JSON.
 *
 * # Safety
 * `service` must be live; `out_json` writable. Free the string with
 * [`qs_string_free`].
 */
enum QsStatus qs_service_optimize(const struct QsService *service, double now_s, char **out_json);

/**
 * Writes the fleet snapshot as JSON.
 *
 * # Safety
 * `service` must be live; `out_json` writable. Free the string with
 * [`qs_string_free`].
 */
enum QsStatus qs_service_snapshot(const struct QsService *service, double now_s, char **out_json);

/**
 * Adds an exclusion box and writes its id.
 *
 * # Safety
 * `service` must be live; `out_id` writable.
 */
enum QsStatus qs_service_add_exclusion(const struct QsService *service,
                                       double south,
                                       double west,
                                       double north,
                                       double east,
                                       uint64_t *out_id);

/**
 * # Safety
 * `service` must be live.
 */
enum QsStatus qs_service_remove_exclusion(const struct QsService *service, uint64_t id);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QSHUTTLE_H */
