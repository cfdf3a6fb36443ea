#ifndef SCG_H
#define SCG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Gradient method selector for [`scg_estimate`].
typedef enum ScgMethod {
  SCG_METHOD_SURROGATE = 0,
  SCG_METHOD_ALGORITHM1 = 1,
} ScgMethod;

// Result of every fallible call.
typedef enum ScgStatus {
  SCG_STATUS_OK = 0,
  // A required pointer argument was null.
  SCG_STATUS_NULL_POINTER = 1,
  // A string argument was not valid UTF-8.
  SCG_STATUS_INVALID_UTF8 = 2,
  // An argument was out of range or malformed.
  SCG_STATUS_INVALID_ARGUMENT = 3,
  // An output buffer length did not match the value size.
  SCG_STATUS_BUFFER_SIZE = 4,
  // The graph failed to load, validate or evaluate.
  SCG_STATUS_GRAPH = 5,
  // The differentiability requirements fail for the requested param.
  SCG_STATUS_CONDITION = 6,
  // The exact oracle cannot handle the graph.
  SCG_STATUS_ORACLE = 7,
  // The requested quantity is undefined, such as a standard error from one sample.
  SCG_STATUS_UNAVAILABLE = 8,
  // A Rust panic was caught at the boundary.
  SCG_STATUS_PANIC = 9,
} ScgStatus;

// The result of one estimate for one param.
typedef struct ScgEstimate ScgEstimate;

// A frozen graph with its input values and baselines.
typedef struct ScgGraph ScgGraph;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *scg_version(void);

// Error message of the most recent call on this thread, empty if it
// succeeded. Valid until the next call into the library on the same thread.
const char *scg_last_error(void);

// Loads a built-in example graph by name.
//
// # Safety
// `name` must be a NUL-terminated string and `out` a writable pointer.
enum ScgStatus scg_graph_builtin(const char *name, struct ScgGraph **out);

// Parses a graph from its JSON text.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a writable pointer.
enum ScgStatus scg_graph_from_json(const char *json, struct ScgGraph **out);

// Serializes a graph with its current input values. Free the result with
// [`scg_string_free`].
//
// # Safety
// `graph` must be a live handle and `out` a writable pointer.
enum ScgStatus scg_graph_to_json(const struct ScgGraph *graph, char **out);

// Frees a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void scg_string_free(char *s);

// Frees a graph handle. Null is ignored.
//
// # Safety
// `graph` must come from this library and not have been freed.
void scg_graph_free(struct ScgGraph *graph);

// Number of nodes in the graph.
//
// # Safety
// `graph` must be a live handle and `out` a writable pointer.
enum ScgStatus scg_graph_node_count(const struct ScgGraph *graph, size_t *out);

// Number of params (differentiation targets).
//
// # Safety
// `graph` must be a live handle and `out` a writable pointer.
enum ScgStatus scg_graph_param_count(const struct ScgGraph *graph, size_t *out);

// Node id of the `index`-th param.
//
// # Safety
// `graph` must be a live handle and `out` a writable pointer.
enum ScgStatus scg_graph_param(const struct ScgGraph *graph, size_t index, size_t *out);

// Resolves a node by name or decimal id.
//
// # Safety
// `graph` must be a live handle, `key` a NUL-terminated string and `out` a writable pointer.
enum ScgStatus scg_graph_find(const struct ScgGraph *graph, const char *key, size_t *out);

// Number of scalar components of a node's value.
//
// # Safety
// `graph` must be a live handle and `out` a writable pointer.
enum ScgStatus scg_graph_node_size(const struct ScgGraph *graph, size_t node, size_t *out);

// Replaces the value of an input node, in row-major order.
//
// # Safety
// `graph` must be a live handle and `data` must point to `len` readable doubles.
enum ScgStatus scg_graph_set_input(struct ScgGraph *graph,
                                   size_t node,
                                   const double *data,
                                   size_t len);

// Estimates the gradient of the expected total cost with respect to param
// `theta` from `n_samples` traces. `method` is an [`ScgMethod`] value and
// `threads` the worker count, 0 for the default.
//
// # Safety
// `graph` must be a live handle and `out` a writable pointer.
enum ScgStatus scg_estimate(const struct ScgGraph *graph,
                            size_t theta,
                            size_t n_samples,
                            uint64_t seed,
                            uint32_t method,
                            size_t threads,
                            struct ScgEstimate **out);

// Frees an estimate handle. Null is ignored.
//
// # Safety
// `est` must come from this library and not have been freed.
void scg_estimate_free(struct ScgEstimate *est);

// Number of components of the estimated gradient.
//
// # Safety
// `est` must be a live handle and `out` a writable pointer.
enum ScgStatus scg_estimate_size(const struct ScgEstimate *est, size_t *out);

// Number of traces the estimate averages.
//
// # Safety
// `est` must be a live handle and `out` a writable pointer.
enum ScgStatus scg_estimate_samples(const struct ScgEstimate *est, size_t *out);

// Copies the gradient mean into `out[0..len]`.
//
// # Safety
// `est` must be a live handle and `out` must point to `len` writable doubles.
enum ScgStatus scg_estimate_mean(const struct ScgEstimate *est, double *out, size_t len);

// Copies the per-component standard error into `out[0..len]`. Fails with
// `Unavailable` for a single-sample estimate.
//
// # Safety
// `est` must be a live handle and `out` must point to `len` writable doubles.
enum ScgStatus scg_estimate_stderr(const struct ScgEstimate *est, double *out, size_t len);

// Exact gradient of the expected total cost by enumeration, into `out[0..len]`.
//
// # Safety
// `graph` must be a live handle and `out` must point to `len` writable doubles.
enum ScgStatus scg_exact_gradient(const struct ScgGraph *graph,
                                  size_t theta,
                                  double *out,
                                  size_t len);

// Exact expected total cost by enumeration.
//
// # Safety
// `graph` must be a live handle and `out` a writable pointer.
enum ScgStatus scg_exact_expectation(const struct ScgGraph *graph, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCG_H */
