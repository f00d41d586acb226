#ifndef ALIGNED_XAI_H
#define ALIGNED_XAI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. `AX_STATUS_OK` is zero.
typedef enum AxStatus {
  AX_STATUS_OK = 0,
  AX_STATUS_NULL_POINTER = 1,
  AX_STATUS_INVALID_ARGUMENT = 2,
  AX_STATUS_IO = 3,
  AX_STATUS_FORMAT = 4,
  AX_STATUS_CONTRACT = 5,
  AX_STATUS_NUMERIC = 6,
  AX_STATUS_METRIC = 7,
  AX_STATUS_EMPTY_INPUT = 8,
  AX_STATUS_PANIC = 9,
} AxStatus;

typedef enum AxNormalization {
  AX_NORMALIZATION_MAX_ONE = 0,
  AX_NORMALIZATION_RAW = 1,
} AxNormalization;

typedef enum AxDirection {
  AX_DIRECTION_ERASURE = 0,
  AX_DIRECTION_RESTORATION = 1,
} AxDirection;

// A single-channel, non-negative importance map.
typedef struct AxFloatMap AxFloatMap;

// A trained classifier loaded from a checkpoint.
typedef struct AxModel AxModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null if none. The
// pointer stays valid until the next failing call on the same thread.
const char *ax_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *ax_version(void);

// Loads an `AXM1` checkpoint.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum AxStatus ax_model_load(const char *path, struct AxModel **out);

// # Safety
// `model` must come from [`ax_model_load`] and not be freed twice. Null is ignored.
void ax_model_free(struct AxModel *model);

// Input height, width and channel count, and the number of labels.
//
// # Safety
// All pointers must be valid.
enum AxStatus ax_model_shape(const struct AxModel *model,
                             uintptr_t *height,
                             uintptr_t *width,
                             uintptr_t *channels,
                             uintptr_t *n_labels);

// Per-label probabilities for one image of `pixels_len` floats, written to
// `probs`, which must hold `probs_len >= n_labels` values.
//
// # Safety
// Buffers must be valid for the given lengths.
enum AxStatus ax_model_predict(const struct AxModel *model,
                               const float *pixels,
                               uintptr_t pixels_len,
                               double *probs,
                               uintptr_t probs_len);

// GradCAM map of `label` for one image.
//
// # Safety
// Buffers must be valid for the given lengths; `out` must be valid.
enum AxStatus ax_gradcam(const struct AxModel *model,
                         const float *pixels,
                         uintptr_t pixels_len,
                         uintptr_t label,
                         enum AxNormalization normalization,
                         struct AxFloatMap **out);

// Builds a map from `height * width` non-negative finite values.
//
// # Safety
// `data` must hold `height * width` floats; `out` must be valid.
enum AxStatus ax_float_map_new(uintptr_t height,
                               uintptr_t width,
                               const float *data,
                               struct AxFloatMap **out);

// Reads a single-channel `AXF1` float map.
//
// # Safety
// `path` must be NUL-terminated; `out` must be valid.
enum AxStatus ax_float_map_read(const char *path, struct AxFloatMap **out);

// # Safety
// `map` must be valid and `path` NUL-terminated.
enum AxStatus ax_float_map_write(const struct AxFloatMap *map, const char *path);

// # Safety
// All pointers must be valid.
enum AxStatus ax_float_map_shape(const struct AxFloatMap *map, uintptr_t *height, uintptr_t *width);

// Borrowed pointer to the row-major values; valid while the map lives.
// Null for a null map.
//
// # Safety
// `map` must be a live handle or null.
const float *ax_float_map_data(const struct AxFloatMap *map);

// # Safety
// `map` must come from this library and not be freed twice. Null is ignored.
void ax_float_map_free(struct AxFloatMap *map);

// ROC AUC of `scores` against 0/1 `truths` (non-zero counts as positive),
// ties scored one half.
//
// # Safety
// Both buffers must hold `n` values; `out` must be valid.
enum AxStatus ax_roc_auc(const double *scores, const uint8_t *truths, uintptr_t n, double *out);

// Label-wise global explanation `(1/n) Σ p_i · E_i` of `n` maps.
//
// # Safety
// `maps` and `weights` must hold `n` entries; `out` must be valid.
enum AxStatus ax_label_global(const struct AxFloatMap *const *maps,
                              const double *weights,
                              uintptr_t n,
                              struct AxFloatMap **out);

// Retained-pixel mask of `map` after erasing the fraction `erased` of least
// important pixels (ties broken by index). `Restoration` gives the
// complement. Writes 1 for retained, 0 for removed.
//
// # Safety
// `mask` must hold `mask_len >= height * width` bytes.
enum AxStatus ax_quantile_mask(const struct AxFloatMap *map,
                               double erased,
                               enum AxDirection direction,
                               uint8_t *mask,
                               uintptr_t mask_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ALIGNED_XAI_H */
