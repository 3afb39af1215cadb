#ifndef GAMBLETA_H
#define GAMBLETA_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum gambleta_status {
  GAMBLETA_STATUS_OK = 0,
  GAMBLETA_STATUS_NULL_POINTER = 1,
  GAMBLETA_STATUS_INVALID_ARGUMENT = 2,
  GAMBLETA_STATUS_LOSS_ABOVE_BOUND = 3,
  GAMBLETA_STATUS_UNSOLVABLE = 4,
  GAMBLETA_STATUS_BUFFER_TOO_SMALL = 5,
  GAMBLETA_STATUS_OUT_OF_DOMAIN = 6,
  GAMBLETA_STATUS_INTERNAL = 7,
} gambleta_status;

/**
 * Exp3Light with a known loss bound.
 */
typedef struct gambleta_exp3light gambleta_exp3light;

/**
 * Exp3Light-A: unknown loss bound, handled by restarts.
 */
typedef struct gambleta_exp3lighta gambleta_exp3lighta;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` as a
 * NUL-terminated string, truncating to `len` bytes. `*needed` receives the
 * full length including the terminator.
 *
 * # Safety
 * `buf` must be valid for `len` writable bytes (or null with `len == 0`);
 * `needed` must be null or writable.
 */
enum gambleta_status gambleta_last_error(char *buf, size_t len, size_t *needed);

/**
 * Creates an Exp3Light solver for `n_arms` arms, `horizon` trials and
 * losses in `[0, loss_bound]`.
 *
 * # Safety
 * `out` must be writable.
 */
enum gambleta_status gambleta_exp3light_new(size_t n_arms,
                                            size_t horizon,
                                            double loss_bound,
                                            struct gambleta_exp3light **out);

/**
 * # Safety
 * `solver` must come from `gambleta_exp3light_new` and not be freed yet;
 * null is ignored.
 */
void gambleta_exp3light_free(struct gambleta_exp3light *solver);

/**
 * Writes the current pull distribution (`n_arms` values) into `out`.
 *
 * # Safety
 * `solver` must be live; `out` must be valid for `len` writes.
 */
enum gambleta_status gambleta_exp3light_probabilities(const struct gambleta_exp3light *solver,
                                                      double *out,
                                                      size_t len);

/**
 * Feeds the loss of the pulled arm.
 *
 * # Safety
 * `solver` must be live.
 */
enum gambleta_status gambleta_exp3light_update(struct gambleta_exp3light *solver,
                                               size_t arm,
                                               double loss);

/**
 * Current epoch `r` and learning rate.
 *
 * # Safety
 * `solver` must be live; `epoch` and `eta` must be writable.
 */
enum gambleta_status gambleta_exp3light_state(const struct gambleta_exp3light *solver,
                                              uint32_t *epoch,
                                              double *eta);

/**
 * Creates an Exp3Light-A solver for `n_arms` arms and `horizon` trials.
 *
 * # Safety
 * `out` must be writable.
 */
enum gambleta_status gambleta_exp3lighta_new(size_t n_arms,
                                             size_t horizon,
                                             struct gambleta_exp3lighta **out);

/**
 * # Safety
 * `solver` must come from `gambleta_exp3lighta_new` and not be freed yet;
 * null is ignored.
 */
void gambleta_exp3lighta_free(struct gambleta_exp3lighta *solver);

/**
 * # Safety
 * `solver` must be live; `out` must be valid for `len` writes.
 */
enum gambleta_status gambleta_exp3lighta_probabilities(const struct gambleta_exp3lighta *solver,
                                                       double *out,
                                                       size_t len);

/**
 * Feeds the loss of the pulled arm; `*restarted` tells whether the loss
 * exceeded the current bound guess and restarted the inner solver.
 *
 * # Safety
 * `solver` must be live; `restarted` must be null or writable.
 */
enum gambleta_status gambleta_exp3lighta_step(struct gambleta_exp3lighta *solver,
                                              size_t arm,
                                              double loss,
                                              bool *restarted);

/**
 * Outer epoch `u`, the bound guess `2^u` and the inner epoch `r`.
 *
 * # Safety
 * `solver` must be live; the out-pointers must be writable.
 */
enum gambleta_status gambleta_exp3lighta_state(const struct gambleta_exp3lighta *solver,
                                               uint32_t *outer_epoch,
                                               double *bound_guess,
                                               uint32_t *inner_epoch);

/**
 * Known-bound regret bound.
 *
 * # Safety
 * `out` must be writable.
 */
enum gambleta_status gambleta_bound_theorem1(size_t n_arms,
                                             size_t horizon,
                                             double loss_bound,
                                             double best_arm_loss,
                                             double *out);

/**
 * Unknown-bound regret bound; `GAMBLETA_STATUS_OUT_OF_DOMAIN` for
 * `loss_bound <= 1`.
 *
 * # Safety
 * `out` must be writable.
 */
enum gambleta_status gambleta_bound_theorem2(size_t n_arms,
                                             size_t horizon,
                                             double loss_bound,
                                             double best_arm_loss,
                                             double *out);

/**
 * Regret bound of Exp3Light on unit losses; requires `loss_bound == 1`.
 *
 * # Safety
 * `out` must be writable.
 */
enum gambleta_status gambleta_bound_unit(size_t n_arms,
                                         size_t horizon,
                                         double loss_bound,
                                         double best_arm_loss,
                                         double *out);

/**
 * Runs `k` algorithms with runtimes `runtimes` (`INFINITY` for never) under
 * the fixed share `share`. Writes the wall-clock time and the winner's
 * index.
 *
 * # Safety
 * `runtimes` and `share` must be valid for `k` reads; `wall_clock` and
 * `winner` must be writable.
 */
enum gambleta_status gambleta_execute_static(const double *runtimes,
                                             const double *share,
                                             size_t k,
                                             double *wall_clock,
                                             size_t *winner);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GAMBLETA_H */
