#ifndef VPSBASIN_H
#define VPSBASIN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum VbStatus {
  VB_STATUS_OK = 0,
  VB_STATUS_NULL_POINTER = 1,
  VB_STATUS_INVALID_ARGUMENT = 2,
  VB_STATUS_PARSE = 3,
  VB_STATUS_IO = 4,
  VB_STATUS_VALIDATION = 5,
  VB_STATUS_DIVERGED = 6,
  VB_STATUS_DEGENERATE_SIGNAL = 7,
  VB_STATUS_EMPTY_BOUNDARY = 8,
  VB_STATUS_INSUFFICIENT_SCALES = 9,
  VB_STATUS_BUFFER_SIZE = 10,
  VB_STATUS_PANIC = 11,
  VB_STATUS_INTERNAL = 12,
} VbStatus;

typedef enum VbNetworkFormat {
  VB_NETWORK_FORMAT_EDGE_LIST = 0,
  VB_NETWORK_FORMAT_DENSE = 1,
} VbNetworkFormat;

typedef enum VbCorrMode {
  VB_CORR_MODE_CIRCULAR = 0,
  VB_CORR_MODE_LINEAR_VALID = 1,
} VbCorrMode;

typedef enum VbNormalization {
  VB_NORMALIZATION_RAW = 0,
  VB_NORMALIZATION_ZERO_MEAN_UNIT_NORM = 1,
} VbNormalization;

typedef enum VbObservable {
  VB_OBSERVABLE_COMPONENT0 = 0,
  VB_OBSERVABLE_SIN_PHASE = 1,
} VbObservable;

typedef struct VbModel VbModel;

typedef struct VbNetwork VbNetwork;

typedef struct VbTrajectory VbTrajectory;

/**
 * Integration settings. ODE models read `dt`, `transient_time` and
 * `window_time`; maps read `transient_steps` and `window_steps`.
 */
typedef struct VbIntegration {
  double dt;
  double transient_time;
  double window_time;
  uint64_t transient_steps;
  uint64_t window_steps;
  uint64_t sample_stride;
} VbIntegration;

/**
 * Fingerprint settings. A negative `max_lag` selects a quarter of the window.
 */
typedef struct VbVpsConfig {
  double beta;
  int64_t max_lag;
  enum VbCorrMode corr_mode;
  enum VbNormalization normalization;
} VbVpsConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Owned by the
 * library; valid until the next call on the same thread.
 */
const char *vb_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *vb_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void vb_string_free(char *s);

/**
 * Recommended defaults for a model kind (`"hr-diffusive"`, `"kuramoto"`, ...).
 *
 * # Safety
 * `kind` must be a NUL-terminated string; `out` must be writable.
 */
enum VbStatus vb_integration_default(const char *kind, struct VbIntegration *out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum VbStatus vb_network_load(const char *path,
                              enum VbNetworkFormat format,
                              bool symmetrize,
                              struct VbNetwork **out);

/**
 * Network from a row-major `n_nodes × n_nodes` weight matrix.
 *
 * # Safety
 * `weights` must point to `n_nodes * n_nodes` doubles; `out` must be writable.
 */
enum VbStatus vb_network_from_dense(size_t n_nodes,
                                    const double *weights,
                                    bool directed,
                                    struct VbNetwork **out);

/**
 * Two all-to-all populations. A negative `drop_edge_seed` keeps every edge.
 *
 * # Safety
 * `out` must be writable.
 */
enum VbStatus vb_network_two_population(size_t pop_size,
                                        double intra_weight,
                                        double inter_weight,
                                        int64_t drop_edge_seed,
                                        struct VbNetwork **out);

/**
 * # Safety
 * `out` must be writable.
 */
enum VbStatus vb_network_modular(size_t n_nodes,
                                 size_t n_modules,
                                 double p_intra,
                                 double p_inter,
                                 uint64_t seed,
                                 struct VbNetwork **out);

/**
 * # Safety
 * `net` must be null or a live handle.
 */
size_t vb_network_n_nodes(const struct VbNetwork *net);

/**
 * # Safety
 * `net` must be a live handle; `out` must be writable.
 */
enum VbStatus vb_network_weight(const struct VbNetwork *net, size_t i, size_t j, double *out);

/**
 * JSON summary (node count, degrees, symmetry, ...). Free with [`vb_string_free`].
 *
 * # Safety
 * `net` must be a live handle; `out` must be writable.
 */
enum VbStatus vb_network_info_json(const struct VbNetwork *net, char **out);

/**
 * # Safety
 * `net` must be null or a handle not yet freed.
 */
void vb_network_free(struct VbNetwork *net);

/**
 * Model from a dynamics document such as
 * `{"kind":"henon","henon":{"p":1.44,"b":0.164,"sigma":0.8}}`.
 * The network handle stays owned by the caller.
 *
 * # Safety
 * `net` must be a live handle, `dynamics_json` a NUL-terminated string and
 * `out` writable.
 */
enum VbStatus vb_model_new(const struct VbNetwork *net,
                           const char *dynamics_json,
                           struct VbModel **out);

/**
 * Full state length `n_nodes * node_dim`, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t vb_model_state_len(const struct VbModel *model);

/**
 * # Safety
 * `model` must be null or a live handle.
 */
size_t vb_model_node_dim(const struct VbModel *model);

/**
 * Right-hand side of a continuous-time model. Both buffers hold `len` doubles.
 *
 * # Safety
 * Pointers must be valid for `len` elements; `model` must be a live handle.
 */
enum VbStatus vb_model_vector_field(const struct VbModel *model,
                                    const double *state,
                                    double *out,
                                    size_t len);

/**
 * One iterate of the network Hénon map. Both buffers hold `len` doubles.
 *
 * # Safety
 * Pointers must be valid for `len` elements; `model` must be a live handle.
 */
enum VbStatus vb_model_henon_step(const struct VbModel *model,
                                  const double *state,
                                  double *out,
                                  size_t len);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void vb_model_free(struct VbModel *model);

/**
 * Integrates (or iterates) from `init` and keeps the post-transient window.
 *
 * # Safety
 * `init` must hold `len` doubles; `model`, `cfg` and `out` must be valid.
 */
enum VbStatus vb_simulate(const struct VbModel *model,
                          const double *init,
                          size_t len,
                          const struct VbIntegration *cfg,
                          struct VbTrajectory **out);

/**
 * Any of the output pointers may be null.
 *
 * # Safety
 * `traj` must be a live handle.
 */
enum VbStatus vb_trajectory_shape(const struct VbTrajectory *traj,
                                  size_t *n_nodes,
                                  size_t *node_dim,
                                  size_t *n_samples,
                                  double *sample_dt);

/**
 * Copies one component series; `len` must equal the sample count.
 *
 * # Safety
 * `out` must be valid for `len` doubles; `traj` must be a live handle.
 */
enum VbStatus vb_trajectory_series(const struct VbTrajectory *traj,
                                   size_t node,
                                   size_t component,
                                   double *out,
                                   size_t len);

/**
 * # Safety
 * `traj` must be null or a handle not yet freed.
 */
void vb_trajectory_free(struct VbTrajectory *traj);

/**
 * Writes the `n(n−1)` fingerprint entries: lags first, then `β·L`.
 *
 * # Safety
 * `out` must be valid for `len` doubles; handles must be live.
 */
enum VbStatus vb_build_vps(const struct VbTrajectory *traj,
                           const struct VbVpsConfig *cfg,
                           enum VbObservable observable,
                           double *out,
                           size_t len);

/**
 * Lag maximizing the cross-correlation of two equal-length series.
 *
 * # Safety
 * `a` and `b` must hold `len` doubles; `cfg` and the outputs must be valid
 * (`correlation` may be null).
 */
enum VbStatus vb_best_lag(const double *a,
                          const double *b,
                          size_t len,
                          const struct VbVpsConfig *cfg,
                          int64_t *tau,
                          double *correlation);

/**
 * Mean squared distance between two `dim × (len/dim)` trajectory blocks at lag `tau`.
 *
 * # Safety
 * `a` and `b` must hold `len` doubles; `out` must be writable.
 */
enum VbStatus vb_alignment_cost(const double *a,
                                const double *b,
                                size_t len,
                                size_t dim,
                                int64_t tau,
                                enum VbCorrMode mode,
                                double *out);

/**
 * Box-counting dimension of the boundary of an `nx × ny` label grid
 * (`labels[iy * nx + ix]`, −1 for unlabelled cells) over power-of-two boxes.
 *
 * # Safety
 * `labels` must hold `nx * ny` values; `d_box` must be writable.
 */
enum VbStatus vb_box_dimension(const int32_t *labels, size_t nx, size_t ny, double *d_box);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VPSBASIN_H */
