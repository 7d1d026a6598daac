#ifndef CASCAST_H
#define CASCAST_H

#pragma once

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CascastStatus {
  CASCAST_STATUS_OK = 0,
  CASCAST_STATUS_NULL_POINTER = 1,
  CASCAST_STATUS_INVALID_ARGUMENT = 2,
  CASCAST_STATUS_IO = 3,
  CASCAST_STATUS_FORMAT = 4,
  CASCAST_STATUS_SHAPE = 5,
  CASCAST_STATUS_CONFIG = 6,
  CASCAST_STATUS_CHECKPOINT_MISMATCH = 7,
  CASCAST_STATUS_INSUFFICIENT_HISTORY = 8,
  CASCAST_STATUS_NUMERIC = 9,
  CASCAST_STATUS_PANIC = 10,
} CascastStatus;

/**
 * Frame sequence handle.
 */
typedef struct CascastFrames CascastFrames;

/**
 * Trained model handle.
 */
typedef struct CascastModel CascastModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Description of the last failure on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *cascast_last_error(void);

/**
 * Static name of a status code.
 */
const char *cascast_status_name(enum CascastStatus status);

/**
 * Reads a frame file.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a valid pointer.
 */
enum CascastStatus cascast_frames_load(const char *path, struct CascastFrames **out);

/**
 * Writes a frame file.
 *
 * # Safety
 * `frames` must be a live handle and `path` a nul-terminated string.
 */
enum CascastStatus cascast_frames_save(const struct CascastFrames *frames, const char *path);

/**
 * Builds a sequence from `count` raw frames of shape (3, height, width) in
 * channel-major byte layout.
 *
 * # Safety
 * `pixels` must point to `len` readable bytes and `out` be a valid pointer.
 */
enum CascastStatus cascast_frames_from_raw(const uint8_t *pixels,
                                           size_t len,
                                           size_t count,
                                           size_t height,
                                           size_t width,
                                           uint32_t start_timestamp,
                                           uint32_t stride_minutes,
                                           struct CascastFrames **out);

/**
 * Generates a synthetic sequence with default scene settings.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum CascastStatus cascast_frames_synthetic(size_t height,
                                            size_t width,
                                            size_t count,
                                            uint64_t seed,
                                            struct CascastFrames **out);

/**
 * Number of frames, or 0 for a null handle.
 *
 * # Safety
 * `frames` must be null or a live handle.
 */
size_t cascast_frames_len(const struct CascastFrames *frames);

/**
 * Frame height and width.
 *
 * # Safety
 * `frames` must be a live handle; `height` and `width` valid pointers.
 */
enum CascastStatus cascast_frames_dims(const struct CascastFrames *frames,
                                       size_t *height,
                                       size_t *width);

/**
 * Timestamp in minutes of frame `index`.
 *
 * # Safety
 * `frames` must be a live handle and `out` a valid pointer.
 */
enum CascastStatus cascast_frames_timestamp(const struct CascastFrames *frames,
                                            size_t index,
                                            uint32_t *out);

/**
 * Copies frame `index` as bytes in (3, height, width) layout into `buf`,
 * which must hold exactly `3 * height * width` bytes.
 *
 * # Safety
 * `frames` must be a live handle and `buf` point to `len` writable bytes.
 */
enum CascastStatus cascast_frames_copy_pixels(const struct CascastFrames *frames,
                                              size_t index,
                                              uint8_t *buf,
                                              size_t len);

/**
 * Releases a frame handle. Null is ignored.
 *
 * # Safety
 * `frames` must be null or a handle not yet freed.
 */
void cascast_frames_free(struct CascastFrames *frames);

/**
 * Reads a checkpoint.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a valid pointer.
 */
enum CascastStatus cascast_model_load(const char *path, struct CascastModel **out);

/**
 * Input and output sequence lengths of a model.
 *
 * # Safety
 * `model` must be a live handle; `in_len` and `out_len` valid pointers.
 */
enum CascastStatus cascast_model_lengths(const struct CascastModel *model,
                                         size_t *in_len,
                                         size_t *out_len);

/**
 * Forecasts the frames following frame `index` of `frames`. Frames are split
 * into `tile_h` x `tile_w` tiles; zero for both uses whole frames.
 *
 * # Safety
 * `model` and `frames` must be live handles and `out` a valid pointer.
 */
enum CascastStatus cascast_model_predict(const struct CascastModel *model,
                                         const struct CascastFrames *frames,
                                         size_t index,
                                         size_t tile_h,
                                         size_t tile_w,
                                         struct CascastFrames **out);

/**
 * Releases a model handle. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void cascast_model_free(struct CascastModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CASCAST_H */
