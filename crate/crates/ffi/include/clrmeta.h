#ifndef CLRMETA_H
#define CLRMETA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum ClrStatus {
  CLR_STATUS_OK = 0,
  CLR_STATUS_INVALID_INPUT = 1,
  CLR_STATUS_STRUCTURAL = 2,
  CLR_STATUS_LIFECYCLE = 3,
  CLR_STATUS_IO = 4,
  CLR_STATUS_NULL_POINTER = 5,
  CLR_STATUS_BUFFER_TOO_SMALL = 6,
  CLR_STATUS_BUSY = 7,
  CLR_STATUS_PANIC = 8,
} ClrStatus;

/**
 * An episode in progress on a private copy of a task.
 */
typedef struct ClrEnv ClrEnv;

/**
 * Feed-forward policy parameters.
 */
typedef struct ClrPolicy ClrPolicy;

/**
 * A restoration task (feeder, demands, renewable profiles).
 */
typedef struct ClrTask ClrTask;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *clr_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *clr_version(void);

/**
 * Builds task `index` of a generated family on a built-in feeder
 * (`"ieee13"` or `"ieee123"`).
 *
 * # Safety
 * `system` must be a NUL-terminated string; `out` must be writable.
 */
enum ClrStatus clr_task_new(const char *system,
                            uint64_t family_seed,
                            size_t index,
                            size_t horizon,
                            double error_level,
                            struct ClrTask **out);

/**
 * Parses a task from its JSON form.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum ClrStatus clr_task_from_json(const char *json, struct ClrTask **out);

/**
 * # Safety
 * `task` must come from a task constructor and not be used afterwards.
 */
void clr_task_free(struct ClrTask *task);

/**
 * Observation length, or 0 for a null task.
 *
 * # Safety
 * `task` must be null or a live task.
 */
size_t clr_task_state_dim(const struct ClrTask *task);

/**
 * Raw action length, or 0 for a null task.
 *
 * # Safety
 * `task` must be null or a live task.
 */
size_t clr_task_action_dim(const struct ClrTask *task);

/**
 * Number of control steps per episode, or 0 for a null task.
 *
 * # Safety
 * `task` must be null or a live task.
 */
size_t clr_task_horizon(const struct ClrTask *task);

/**
 * Starts an episode. `resample` selects fresh forecast noise from `scenario_seed`;
 * otherwise the task's stored forecasts are used.
 *
 * # Safety
 * `task` must be live; `out` must be writable.
 */
enum ClrStatus clr_env_new(const struct ClrTask *task,
                           bool resample,
                           uint64_t scenario_seed,
                           struct ClrEnv **out);

/**
 * # Safety
 * `env` must come from [`clr_env_new`] and not be used afterwards.
 */
void clr_env_free(struct ClrEnv *env);

/**
 * Restarts the episode and writes the initial observation.
 *
 * # Safety
 * `env` must be live; `state_out` must hold `state_len` doubles.
 */
enum ClrStatus clr_env_reset(struct ClrEnv *env, double *state_out, size_t state_len);

/**
 * Applies a raw action in `[-1, 1]^action_dim` and writes the next
 * observation, the reward and whether the episode is over.
 *
 * # Safety
 * `env` must be live; buffers must hold the stated lengths; `reward` and
 * `done` must be writable.
 */
enum ClrStatus clr_env_step(struct ClrEnv *env,
                            const double *raw,
                            size_t raw_len,
                            double *state_out,
                            size_t state_len,
                            double *reward,
                            int *done);

/**
 * Fresh policy with hidden layer sizes `hidden[0..n_hidden]`. When `task`
 * is non-null its input normalizer is attached.
 *
 * # Safety
 * `hidden` must hold `n_hidden` values; `task` must be null or live; `out` must be writable.
 */
enum ClrStatus clr_policy_new(size_t d_in,
                              size_t d_out,
                              const size_t *hidden,
                              size_t n_hidden,
                              uint64_t seed,
                              const struct ClrTask *task,
                              struct ClrPolicy **out);

/**
 * Loads a policy checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum ClrStatus clr_policy_load(const char *path, struct ClrPolicy **out);

/**
 * Writes a policy checkpoint file.
 *
 * # Safety
 * `policy` must be live; `path` must be a NUL-terminated string.
 */
enum ClrStatus clr_policy_save(const struct ClrPolicy *policy, const char *path);

/**
 * # Safety
 * `policy` must come from a policy constructor and not be used afterwards.
 */
void clr_policy_free(struct ClrPolicy *policy);

/**
 * Number of parameters, or 0 for a null policy.
 *
 * # Safety
 * `policy` must be null or live.
 */
size_t clr_policy_param_count(const struct ClrPolicy *policy);

/**
 * Copies the flat parameter vector into `theta_out`.
 *
 * # Safety
 * `policy` must be live; `theta_out` must hold `len` doubles.
 */
enum ClrStatus clr_policy_get_params(const struct ClrPolicy *policy, double *theta_out, size_t len);

/**
 * Replaces the flat parameter vector; `len` must equal the parameter count.
 *
 * # Safety
 * `policy` must be live; `theta` must hold `len` doubles.
 */
enum ClrStatus clr_policy_set_params(struct ClrPolicy *policy, const double *theta, size_t len);

/**
 * Evaluates the policy on one observation.
 *
 * # Safety
 * `policy` must be live; buffers must hold the stated lengths.
 */
enum ClrStatus clr_policy_forward(const struct ClrPolicy *policy,
                                  const double *input,
                                  size_t in_len,
                                  double *output,
                                  size_t out_len);

/**
 * Total reward of one episode driven by the policy.
 *
 * # Safety
 * `policy` and `task` must be live; `total_reward` must be writable.
 */
enum ClrStatus clr_policy_rollout(const struct ClrPolicy *policy,
                                  const struct ClrTask *task,
                                  uint64_t scenario_seed,
                                  double *total_reward);

/**
 * `-x^2 + 10`.
 */
double clr_bench_f1(double x);

/**
 * The two-dimensional Ackley benchmark in its printed form (minimum 100 at the origin).
 */
double clr_bench_f2(double x, double y);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CLRMETA_H */
