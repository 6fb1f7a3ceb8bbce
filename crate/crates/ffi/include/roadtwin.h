#ifndef ROADTWIN_H
#define ROADTWIN_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Number of features in a road embedding.
#define RT_FEATURES 7

typedef enum RtStatus {
  RT_STATUS_OK = 0,
  // Malformed input: bad XML or CSV, invalid arguments.
  RT_STATUS_INPUT_ERROR = 2,
  // Valid input outside the model's domain: no roads, no data for a date.
  RT_STATUS_DOMAIN_ERROR = 3,
  // An internal invariant failed.
  RT_STATUS_INVARIANT_ERROR = 4,
  // A required pointer was null.
  RT_STATUS_NULL_POINTER = 5,
  // A caller buffer is too small; the required length was written back.
  RT_STATUS_BUFFER_TOO_SMALL = 6,
  // The library panicked; the handle involved should be discarded.
  RT_STATUS_PANIC = 7,
} RtStatus;

// Road graph handle.
typedef struct RtGraph RtGraph;

// Traffic series handle (one sensor).
typedef struct RtSeries RtSeries;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `cap`). Returns the full message length without the NUL.
//
// # Safety
// `buf` must be null or point to `cap` writable bytes.
size_t rt_last_error_message(char *buf, size_t cap);

// Library version as a static NUL-terminated string.
const char *rt_version(void);

// Parses an OSM XML extract and builds the drivable graph within
// `radius_m` of the center, with the default speed table.
//
// # Safety
// `xml` must point to `len` readable bytes; `out` must be valid for one write.
enum RtStatus rt_graph_from_osm(const uint8_t *xml,
                                size_t len,
                                double center_lat,
                                double center_lon,
                                double radius_m,
                                struct RtGraph **out);

// # Safety
// `graph` must be null or a handle from [`rt_graph_from_osm`] not yet freed.
void rt_graph_free(struct RtGraph *graph);

// # Safety
// `graph` must be a live handle; outputs must be valid for one write.
enum RtStatus rt_graph_counts(const struct RtGraph *graph, size_t *nodes, size_t *edges);

// Shortest travel time in seconds between two OSM node ids.
// `reachable` is false (and `seconds` infinite) when no path exists.
//
// # Safety
// `graph` must be a live handle; outputs must be valid for one write.
enum RtStatus rt_shortest_travel_time(const struct RtGraph *graph,
                                      int64_t src,
                                      int64_t dst,
                                      double *seconds,
                                      bool *reachable);

// Raw road embedding of a location on the graph: `out` receives
// [`RT_FEATURES`] values. `road_type` (e.g. "primary") may be null and
// `lanes` 0 to keep the graph's attributes.
//
// # Safety
// `graph` must be a live handle, `road_type` null or a C string, and
// `out` must point to [`RT_FEATURES`] writable doubles.
enum RtStatus rt_graph_embedding(const struct RtGraph *graph,
                                 double lat,
                                 double lon,
                                 size_t hops,
                                 double snap_threshold_m,
                                 const char *road_type,
                                 uint32_t lanes,
                                 double *out);

// Min-max normalizes `n` raw embeddings (row-major, `n x RT_FEATURES`)
// across the pool into `out` (same shape).
//
// # Safety
// `raw` and `out` must each point to `n * RT_FEATURES` doubles.
enum RtStatus rt_normalize_pool(const double *raw, size_t n, double *out);

// Distance between two `dims`-vectors; `metric` 0 = Euclidean, 1 = L1.
//
// # Safety
// `u` and `v` must point to `dims` doubles; `out` valid for one write.
enum RtStatus rt_embedding_distance(const double *u,
                                    const double *v,
                                    size_t dims,
                                    uint32_t metric,
                                    double *out);

// `100 * (1 - d / max)`, with `max` the largest distance in the unit cube.
//
// # Safety
// `out` must be valid for one write.
enum RtStatus rt_similarity_percent(double d, size_t dims, uint32_t metric, double *out);

// # Safety
// `y` and `yhat` must point to `len` doubles; `out` valid for one write.
enum RtStatus rt_rmse(const double *y, const double *yhat, size_t len, double *out);

// # Safety
// `out` must be valid for one write.
enum RtStatus rt_nrmse(double rmse_value, double mean_flow, double *out);

// Friedman test on a row-major `blocks x methods` error matrix.
// `mean_ranks` may be null, else it receives `methods` values.
//
// # Safety
// `errors` must point to `blocks * methods` doubles; `statistic` and
// `p_value` valid for one write; `mean_ranks` null or `methods` doubles.
enum RtStatus rt_friedman(const double *errors,
                          size_t blocks,
                          size_t methods,
                          double *statistic,
                          double *p_value,
                          double *mean_ranks);

// Nemenyi critical difference `q * sqrt(k (k + 1) / (6 n))`.
// A non-positive `q` takes the shipped value for `k` at `alpha`.
//
// # Safety
// `out` must be valid for one write.
enum RtStatus rt_nemenyi_cd(double q, size_t k, size_t n, double alpha, double *out);

// Loads one sensor's `sensor_id,timestamp,flow` CSV and cleans it.
// A non-positive `spike_factor` skips cleaning.
//
// # Safety
// `csv` must point to `len` bytes; `out` valid for one write.
enum RtStatus rt_series_from_csv(const uint8_t *csv,
                                 size_t len,
                                 uint32_t interval_min,
                                 double spike_factor,
                                 size_t max_gap,
                                 struct RtSeries **out);

// # Safety
// `series` must be null or a handle from [`rt_series_from_csv`] not yet freed.
void rt_series_free(struct RtSeries *series);

// # Safety
// `series` must be a live handle; outputs valid for one write.
enum RtStatus rt_series_shape(const struct RtSeries *series, size_t *days, size_t *slots_per_day);

// Slotwise median profile. `filter` 0 = weekdays, 1 = weekends and
// holidays, 2 = all days. `holidays` is an optional newline-separated
// list of ISO dates. `values` needs room for one value per slot; on
// [`RtStatus::BufferTooSmall`] the slot count is written to `len`.
//
// # Safety
// `series` must be a live handle, `holidays` null or a C string,
// `values` null or `cap` writable doubles, `len` valid for one write.
enum RtStatus rt_series_profile(const struct RtSeries *series,
                                uint32_t filter,
                                const char *holidays,
                                double *values,
                                size_t cap,
                                size_t *len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROADTWIN_H */
