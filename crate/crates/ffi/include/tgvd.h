#ifndef TGVD_H
#define TGVD_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum TgvdStatus {
  TGVD_STATUS_OK = 0,
  TGVD_STATUS_NULL_POINTER = 1,
  TGVD_STATUS_INVALID_ARGUMENT = 2,
  TGVD_STATUS_IO = 3,
  // The solver stopped at `max_iters`; the output image is still set.
  TGVD_STATUS_NOT_CONVERGED = 4,
  TGVD_STATUS_SOLVER_FAILURE = 5,
  TGVD_STATUS_PANIC = 6,
} TgvdStatus;

typedef enum TgvdMethod {
  TGVD_METHOD_ROF = 0,
  TGVD_METHOD_DGTV = 1,
  TGVD_METHOD_DGTGV = 2,
  TGVD_METHOD_TGV = 3,
  TGVD_METHOD_MTGV = 4,
  TGVD_METHOD_MTGV_W = 5,
  TGVD_METHOD_CTGV = 6,
} TgvdMethod;

typedef enum TgvdSolver {
  TGVD_SOLVER_CHAMBOLLE_POCK = 0,
  TGVD_SOLVER_DOUGLAS_RACHFORD = 1,
  TGVD_SOLVER_DOUGLAS_RACHFORD_INEXACT = 2,
} TgvdSolver;

// Opaque grayscale image on `[0, 1]`.
typedef struct TgvdImage TgvdImage;

// Denoising options. Parameters set to NaN (and `pcg_iters = 0`) take
// their parameter-free defaults.
typedef struct TgvdOptions {
  enum TgvdMethod method;
  enum TgvdSolver solver;
  double gap_tol;
  size_t max_iters;
  double alpha;
  double alpha0;
  double alpha1;
  double delta1;
  double delta2;
  double c;
  size_t pcg_iters;
  // Nonzero to use the block incomplete Cholesky preconditioner.
  uint8_t use_preconditioner;
} TgvdOptions;

// Outcome of [`tgvd_denoise`].
typedef struct TgvdSummary {
  size_t iterations;
  double relative_gap;
  double wall_time_s;
  uint8_t converged;
  double sigma_hat;
} TgvdSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread (empty if none).
// The pointer is valid until the next failing call on the same thread.
const char *tgvd_last_error(void);

// Static description of a status code.
const char *tgvd_status_message(enum TgvdStatus status);

// Copies `rows * cols` row-major values into a new image.
//
// # Safety
// `data` must point to `rows * cols` readable doubles; `out` must be writable.
enum TgvdStatus tgvd_image_new(size_t rows,
                               size_t cols,
                               const double *data,
                               struct TgvdImage **out);

// Releases an image; null is ignored.
//
// # Safety
// `image` must come from this library and not be used afterwards.
void tgvd_image_free(struct TgvdImage *image);

// Loads an 8- or 16-bit PGM file.
//
// # Safety
// `path` must be NUL-terminated; `out` must be writable.
enum TgvdStatus tgvd_image_load_pgm(const char *path, struct TgvdImage **out);

// Saves as 8-bit binary PGM, clamping to `[0, 1]`.
//
// # Safety
// `image` must be a live handle; `path` must be NUL-terminated.
enum TgvdStatus tgvd_image_save_pgm(const struct TgvdImage *image, const char *path);

// Number of rows, or 0 for null.
//
// # Safety
// `image` must be a live handle or null.
size_t tgvd_image_rows(const struct TgvdImage *image);

// Number of columns, or 0 for null.
//
// # Safety
// `image` must be a live handle or null.
size_t tgvd_image_cols(const struct TgvdImage *image);

// Copies the row-major pixel values into `out`, which holds `len` doubles.
//
// # Safety
// `image` must be a live handle; `out` must hold `len` writable doubles.
enum TgvdStatus tgvd_image_copy_data(const struct TgvdImage *image, double *out, size_t len);

// Default options: MTGV, Chambolle-Pock, relative gap `1e-4`,
// 20000 iterations, all model parameters from the noise estimate.
struct TgvdOptions tgvd_options_default(void);

// Denoises `input`. On [`TgvdStatus::Ok`] and [`TgvdStatus::NotConverged`]
// a new image is written to `out`; `summary` may be null.
//
// # Safety
// `input` must be a live handle, `options` readable (or null for
// defaults), `out` writable, `summary` writable or null.
enum TgvdStatus tgvd_denoise(const struct TgvdImage *input,
                             const struct TgvdOptions *options,
                             struct TgvdImage **out,
                             struct TgvdSummary *summary);

// PSNR in dB (peak 1) of `image` against `reference`; `+inf` if identical.
//
// # Safety
// Both handles must be live; `out` must be writable.
enum TgvdStatus tgvd_psnr(const struct TgvdImage *image,
                          const struct TgvdImage *reference,
                          double *out);

// Noise standard deviation and norm estimated from the image.
//
// # Safety
// `image` must be live; `sigma` and `delta1` writable (either may be null).
enum TgvdStatus tgvd_estimate_noise(const struct TgvdImage *image, double *sigma, double *delta1);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TGVD_H */
