#ifndef COALITION_NASH_H
#define COALITION_NASH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CnStatus {
  CN_STATUS_OK = 0,
  CN_STATUS_NULL_POINTER = 1,
  CN_STATUS_INVALID_UTF8 = 2,
  CN_STATUS_PARSE = 3,
  CN_STATUS_IO = 4,
  CN_STATUS_CONFIG = 5,
  CN_STATUS_DIMENSION = 6,
  CN_STATUS_INVALID_GRAPH = 7,
  CN_STATUS_NON_CONVERGENCE = 8,
  CN_STATUS_DIVERGENCE = 9,
  CN_STATUS_NUMERICAL = 10,
  CN_STATUS_BUFFER_TOO_SMALL = 11,
  CN_STATUS_PANIC = 12,
  CN_STATUS_OTHER = 13,
} CnStatus;

/**
 * The result of one simulation run.
 */
typedef struct CnRun CnRun;

/**
 * A loaded scenario.
 */
typedef struct CnScenario CnScenario;

/**
 * A reference equilibrium.
 */
typedef struct CnSolution CnSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *cn_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cn_version(void);

/**
 * Loads a scenario file. `overrides` holds `n_overrides` strings of the
 * form `section.key=value`; it may be NULL when `n_overrides` is 0.
 *
 * # Safety
 * `path` and every override must be NUL-terminated strings; `out` must be
 * writable.
 */
enum CnStatus cn_scenario_load(const char *path,
                               const char *const *overrides,
                               size_t n_overrides,
                               struct CnScenario **out);

/**
 * # Safety
 * `s` must come from [`cn_scenario_load`] and not be used afterwards.
 */
void cn_scenario_free(struct CnScenario *s);

/**
 * Number of agents and per-agent action dimension.
 *
 * # Safety
 * `s` must be a live scenario handle; the out pointers must be writable.
 */
enum CnStatus cn_scenario_shape(const struct CnScenario *s, size_t *num_agents, size_t *action_dim);

/**
 * Solves for the reference equilibrium with the scenario's oracle settings.
 *
 * # Safety
 * `s` must be a live scenario handle; `out` must be writable.
 */
enum CnStatus cn_oracle_solve(const struct CnScenario *s, struct CnSolution **out);

/**
 * # Safety
 * `sol` must come from [`cn_oracle_solve`] and not be used afterwards.
 */
void cn_solution_free(struct CnSolution *sol);

/**
 * Copies the stacked equilibrium action into `buf`.
 *
 * # Safety
 * `sol` must be live; `buf` must hold `len` doubles.
 */
enum CnStatus cn_solution_x(const struct CnSolution *sol, double *buf, size_t len);

/**
 * Largest KKT residual of the solution.
 *
 * # Safety
 * `sol` must be live; `out` must be writable.
 */
enum CnStatus cn_solution_kkt(const struct CnSolution *sol, double *out);

/**
 * Runs the simulation configured in the scenario. `reference` may be NULL;
 * otherwise the gap to it is tracked.
 *
 * # Safety
 * `s` must be live, `reference` NULL or live, `out` writable.
 */
enum CnStatus cn_run(const struct CnScenario *s,
                     const struct CnSolution *reference,
                     struct CnRun **out);

/**
 * # Safety
 * `run` must come from [`cn_run`] and not be used afterwards.
 */
void cn_run_free(struct CnRun *run);

/**
 * Final time, final gap (NaN without a reference) and largest KKT residual.
 *
 * # Safety
 * `run` must be live; the out pointers must be writable.
 */
enum CnStatus cn_run_summary(const struct CnRun *run,
                             double *final_time,
                             double *gap,
                             double *kkt_max);

/**
 * Copies the final stacked plant output (or seeker estimate without
 * plants) into `buf`.
 *
 * # Safety
 * `run` must be live; `buf` must hold `len` doubles.
 */
enum CnStatus cn_run_final_x(const struct CnRun *run, double *buf, size_t len);

/**
 * Writes the trajectory CSV and its JSON sidecar.
 *
 * # Safety
 * `run` must be live; `path` must be a NUL-terminated string.
 */
enum CnStatus cn_run_write_log(const struct CnRun *run, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COALITION_NASH_H */
