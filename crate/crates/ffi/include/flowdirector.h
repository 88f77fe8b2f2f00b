#ifndef FLOWDIRECTOR_H
#define FLOWDIRECTOR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/*
 Result of every fallible call.
 */
typedef enum FdStatus {
  FD_STATUS_OK = 0,
  FD_STATUS_INVALID_ARGUMENT = 1,
  FD_STATUS_SHAPE_MISMATCH = 2,
  FD_STATUS_SINGULARITY = 3,
  FD_STATUS_DEGENERATE_POSTERIOR = 4,
  FD_STATUS_NOT_FOUND = 5,
  FD_STATUS_FORMAT = 6,
  FD_STATUS_IO = 7,
  /*
   A numerical failure inside an editing step.
   */
  FD_STATUS_RUNTIME = 8,
  FD_STATUS_NULL_POINTER = 9,
  FD_STATUS_PANIC = 10,
} FdStatus;

/*
 Opaque rendered scene.
 */
typedef struct FdScene FdScene;

/*
 Opaque video tensor (`T*H*W*C` doubles, channel fastest).
 */
typedef struct FdTensor FdTensor;

/*
 Video tensor dimensions `(T, H, W, C)`.
 */
typedef struct FdDims {
  size_t frames;
  size_t height;
  size_t width;
  size_t channels;
} FdDims;

/*
 Temporal consistency scores.
 */
typedef struct FdWarpScores {
  double warp_ssim;
  double warp_l1;
  double warp_l2;
} FdWarpScores;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or NULL after a
 success. Valid until the next call into this library on the same thread.
 */
const char *fd_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *fd_version(void);

/*
 Copies `len` doubles from `data` into a new tensor. `len` must equal
 `frames * height * width * channels`.

 # Safety
 `data` must point to `len` readable doubles; `out` must be writable.
 */
enum FdStatus fd_tensor_new(struct FdDims dims,
                            const double *data,
                            size_t len,
                            struct FdTensor **out);

/*
 Releases a tensor. NULL is ignored.

 # Safety
 `t` must come from this library and not be used afterwards.
 */
void fd_tensor_free(struct FdTensor *t);

/*
 # Safety
 `t` must be a live tensor handle; `out` must be writable.
 */
enum FdStatus fd_tensor_dims(const struct FdTensor *t, struct FdDims *out);

/*
 Copies the samples into `buf`, which must hold exactly the tensor's
 element count.

 # Safety
 `t` must be a live tensor handle; `buf` must point to `len` writable doubles.
 */
enum FdStatus fd_tensor_copy_data(const struct FdTensor *t, double *buf, size_t len);

/*
 Reads an FDT1 file.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum FdStatus fd_tensor_read_fdt(const char *path, struct FdTensor **out);

/*
 Writes an FDT1 file atomically.

 # Safety
 `t` must be a live tensor handle; `path` a NUL-terminated string.
 */
enum FdStatus fd_tensor_write_fdt(const struct FdTensor *t, const char *path);

/*
 Builds an editing mask from two single-channel attention tensors.

 # Safety
 `a_src` and `a_tar` must be live tensor handles; `out` must be writable.
 */
enum FdStatus fd_build_mask(const struct FdTensor *a_src,
                            const struct FdTensor *a_tar,
                            size_t kernel,
                            double delta,
                            bool soften,
                            struct FdTensor **out);

/*
 Mean per-frame SSIM between two videos of equal shape.

 # Safety
 `a` and `b` must be live tensor handles; `out` must be writable.
 */
enum FdStatus fd_ssim(const struct FdTensor *a, const struct FdTensor *b, double *out);

/*
 Warp metrics of `edited` under `flow` (`(T-1) x H x W x 2`, `(dy, dx)`).

 # Safety
 `edited` and `flow` must be live tensor handles; `out` must be writable.
 */
enum FdStatus fd_warp_metrics(const struct FdTensor *edited,
                              const struct FdTensor *flow,
                              struct FdWarpScores *out);

/*
 Parses and renders a scene manifest given as JSON text.

 # Safety
 `manifest_json` must be a NUL-terminated string; `out` must be writable.
 */
enum FdStatus fd_scene_render(const char *manifest_json, uint64_t seed, struct FdScene **out);

/*
 Releases a scene. NULL is ignored.

 # Safety
 `s` must come from this library and not be used afterwards.
 */
void fd_scene_free(struct FdScene *s);

/*
 New tensor holding the rendered video.

 # Safety
 `s` must be a live scene handle; `out` must be writable.
 */
enum FdStatus fd_scene_video(const struct FdScene *s, struct FdTensor **out);

/*
 New tensor holding the ground-truth flow.

 # Safety
 `s` must be a live scene handle; `out` must be writable.
 */
enum FdStatus fd_scene_flow(const struct FdScene *s, struct FdTensor **out);

/*
 Runs an edit described by a JSON run config and returns the edited video.
 A relative scene path resolves against `base_dir` (the current directory
 when NULL).

 # Safety
 `config_json` must be a NUL-terminated string, `base_dir` NULL or one;
 `out` must be writable.
 */
enum FdStatus fd_edit(const char *config_json, const char *base_dir, struct FdTensor **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOWDIRECTOR_H */
