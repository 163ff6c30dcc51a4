#ifndef PRADA_H
#define PRADA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes.
 */
typedef enum PradaStatus {
  PRADA_STATUS_OK = 0,
  PRADA_STATUS_NULL_POINTER = 1,
  PRADA_STATUS_INVALID_UTF8 = 2,
  PRADA_STATUS_INVALID_CONFIG = 3,
  PRADA_STATUS_PARSE_ERROR = 4,
  PRADA_STATUS_NOT_FOUND = 5,
  PRADA_STATUS_OPERATION_FAILED = 6,
  PRADA_STATUS_NOT_SETTLED = 7,
  PRADA_STATUS_INVALID_NODE = 8,
  PRADA_STATUS_PANIC = 9,
} PradaStatus;

/*
 Opaque handle to a simulated cluster.
 */
typedef struct PradaCluster PradaCluster;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Builds a cluster from a JSON configuration document and lets it settle.

 # Safety
 `config_json` must be a valid NUL-terminated string and `out` a valid
 pointer. On success `*out` receives a handle to free with
 [`prada_cluster_free`].
 */
enum PradaStatus prada_cluster_new(const char *config_json,
                                   uint64_t seed,
                                   struct PradaCluster **out);

/*
 Releases a handle. Null is ignored.

 # Safety
 `cluster` must be null or a handle from [`prada_cluster_new`] that has
 not been freed.
 */
void prada_cluster_free(struct PradaCluster *cluster);

/*
 Executes one statement and runs the cluster until it settles. On `Ok`
 for a SELECT, `*out_json` receives the row as JSON; otherwise it is set
 to null. `coordinator` picks the contact node; a negative value lets
 the client choose.

 # Safety
 `cluster` must be a live handle, `statement` a valid NUL-terminated
 string and `out_json` null or a valid pointer.
 */
enum PradaStatus prada_cluster_execute(struct PradaCluster *cluster,
                                       const char *statement,
                                       int64_t coordinator,
                                       char **out_json);

/*
 Crashes a node (fail-stop).

 # Safety
 `cluster` must be a live handle.
 */
enum PradaStatus prada_cluster_crash(struct PradaCluster *cluster, uint32_t node);

/*
 Counts consistency violations over the live nodes.

 # Safety
 `cluster` must be a live handle and `out_count` a valid pointer.
 */
enum PradaStatus prada_cluster_scan(const struct PradaCluster *cluster, size_t *out_count);

/*
 Writes the cluster snapshot as JSON, in the format read by `prada check`.

 # Safety
 `cluster` must be a live handle and `out_json` a valid pointer.
 */
enum PradaStatus prada_cluster_snapshot(const struct PradaCluster *cluster, char **out_json);

/*
 Simulated time in nanoseconds, or 0 for a null handle.

 # Safety
 `cluster` must be null or a live handle.
 */
uint64_t prada_cluster_now_ns(const struct PradaCluster *cluster);

/*
 Message of the last failure on `cluster`, owned by the handle and valid
 until the next call on it. Empty when nothing failed yet.

 # Safety
 `cluster` must be null or a live handle.
 */
const char *prada_last_error(const struct PradaCluster *cluster);

/*
 Static name of a status code.
 */
const char *prada_status_name(enum PradaStatus status);

/*
 Releases a string returned by this library. Null is ignored.

 # Safety
 `s` must be null or a string from this library not yet freed.
 */
void prada_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PRADA_H */
