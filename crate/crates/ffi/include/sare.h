#ifndef SARE_H
#define SARE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes shared by all fallible functions.
typedef enum SareStatus {
  SARE_STATUS_OK = 0,
  SARE_STATUS_NULL_POINTER = 1,
  SARE_STATUS_INVALID_ARGUMENT = 2,
  SARE_STATUS_DIMENSION_MISMATCH = 3,
  SARE_STATUS_DATA_ERROR = 4,
  SARE_STATUS_BACKEND_ERROR = 5,
  SARE_STATUS_PANIC = 6,
} SareStatus;

// Which path produced a prediction.
typedef enum SareRoute {
  SARE_ROUTE_SYSTEM1 = 0,
  SARE_ROUTE_SYSTEM2 = 1,
  SARE_ROUTE_SYSTEM2_FALLBACK = 2,
} SareRoute;

// A loaded knowledge base plus backend and configuration.
typedef struct SareEngine SareEngine;

// One classification result.
typedef struct SarePrediction SarePrediction;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Loads the knowledge base in `kb_dir` and opens `backend`, which uses the
// command-line syntax: `none`, `mock:<rules.json>`, `http[:<url>]` or
// `chat:<url>`. A null `backend` means `none`.
//
// # Safety
// `kb_dir` and `backend` must be null or valid NUL-terminated strings, and
// `out` must be a valid pointer to writable storage.
enum SareStatus sare_engine_open(const char *kb_dir, const char *backend, struct SareEngine **out);

// Releases an engine. Null is ignored.
//
// # Safety
// `engine` must be null or a handle from [`sare_engine_open`] not yet freed.
void sare_engine_free(struct SareEngine *engine);

// Replaces the trigger parameters. Pass `-INFINITY` for `theta` to send
// every sample whose category has never been observed, and only those,
// to the reasoning backend.
//
// # Safety
// `engine` must be a live handle not used concurrently from another thread.
enum SareStatus sare_engine_set_trigger(struct SareEngine *engine,
                                        double theta,
                                        double eta,
                                        double alpha);

// Embedding dimension expected by [`sare_classify`], or 0 for null.
//
// # Safety
// `engine` must be null or a live handle.
size_t sare_engine_dim(const struct SareEngine *engine);

// Number of categories in the knowledge base, or 0 for null.
//
// # Safety
// `engine` must be null or a live handle.
size_t sare_engine_num_categories(const struct SareEngine *engine);

// Classifies one embedding. `image_ref` may be null. Backend failures do
// not fail the call: the prediction falls back to the top-1 candidate and
// carries the error text in its JSON form.
//
// The engine may be shared across threads for this call.
//
// # Safety
// `engine` must be a live handle, `sample_id` a valid NUL-terminated
// string, `embedding` must point to `len` readable floats, `image_ref`
// null or a valid string, and `out` a valid pointer to writable storage.
enum SareStatus sare_classify(const struct SareEngine *engine,
                              const char *sample_id,
                              const float *embedding,
                              size_t len,
                              const char *image_ref,
                              struct SarePrediction **out);

// Releases a prediction. Null is ignored.
//
// # Safety
// `pred` must be null or a handle from [`sare_classify`] not yet freed.
void sare_prediction_free(struct SarePrediction *pred);

// Predicted category id, borrowed from `pred`. Null for a null handle.
//
// # Safety
// `pred` must be null or a live handle.
const char *sare_prediction_label(const struct SarePrediction *pred);

// Sample id, borrowed from `pred`. Null for a null handle.
//
// # Safety
// `pred` must be null or a live handle.
const char *sare_prediction_sample_id(const struct SarePrediction *pred);

// Route taken. A null handle reports `System1`.
//
// # Safety
// `pred` must be null or a live handle.
enum SareRoute sare_prediction_route(const struct SarePrediction *pred);

// Trigger score of the prediction; `-INFINITY` for categories never
// observed and NaN for a null handle.
//
// # Safety
// `pred` must be null or a live handle.
double sare_prediction_score(const struct SarePrediction *pred);

// Full prediction as JSON. Free the result with [`sare_string_free`].
// Returns null for a null handle.
//
// # Safety
// `pred` must be null or a live handle.
char *sare_prediction_to_json(const struct SarePrediction *pred);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must be null or a string from [`sare_prediction_to_json`] not yet freed.
void sare_string_free(char *s);

// Reciprocal rank fusion term for 1-based ranks.
//
// # Safety
// `out` must be a valid pointer to writable storage.
enum SareStatus sare_rrf_score(size_t rank_visual, size_t rank_textual, double kappa, double *out);

// Uncertainty penalty for a category seen `n_c` times out of `total_n`
// retrievals. `INFINITY` when `n_c` is 0.
double sare_uncertainty_penalty(uint64_t total_n, uint64_t n_c);

// Library version as a static string.
const char *sare_version(void);

// Message for the last failed call on this thread, or null. Borrowed until
// the next call into this library on the same thread.
const char *sare_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SARE_H */
