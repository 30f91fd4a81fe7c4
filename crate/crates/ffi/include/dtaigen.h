#ifndef DTAIGEN_H
#define DTAIGEN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum {
  DTAIGEN_STATUS_OK = 0,
  DTAIGEN_STATUS_NULL_POINTER = 1,
  DTAIGEN_STATUS_INVALID_STRING = 2,
  DTAIGEN_STATUS_SCHEMA = 3,
  DTAIGEN_STATUS_PARSE = 4,
  DTAIGEN_STATUS_DEGENERATE_COLUMN = 5,
  DTAIGEN_STATUS_PARAMETER = 6,
  DTAIGEN_STATUS_INSUFFICIENT_DATA = 7,
  DTAIGEN_STATUS_DOMAIN = 8,
  DTAIGEN_STATUS_DIMENSION = 9,
  DTAIGEN_STATUS_CONTRACT = 10,
  DTAIGEN_STATUS_DIVERGENCE = 11,
  DTAIGEN_STATUS_NUMERICAL = 12,
  DTAIGEN_STATUS_CONFIG = 13,
  DTAIGEN_STATUS_IO = 14,
  DTAIGEN_STATUS_PANIC = 15,
} DtaigenStatus;

/**
 * Opaque dataset handle.
 */
typedef struct DtaigenDataset DtaigenDataset;

/**
 * Opaque trained generator handle.
 */
typedef struct DtaigenGenerator DtaigenGenerator;

/**
 * Opaque target specification handle.
 */
typedef struct DtaigenTargets DtaigenTargets;

/**
 * Set-level evaluation metrics.
 */
typedef struct {
  double mean_tsr;
  double feasibility_rate;
  double mean_dtai;
  double mean_mtr;
  double hypervolume;
  double mean_novelty;
  double design_space_diversity;
  double performance_space_diversity;
} DtaigenMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *dtaigen_version(void);

/**
 * Message of the last failed call on this thread, or an empty string.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *dtaigen_last_error(void);

/**
 * Per-objective achievement score of ratio `r`.
 *
 * # Safety
 * `out` must be a valid pointer to one `double`.
 */
DtaigenStatus dtaigen_achievement_score(double r, double alpha, double beta, double *out);

/**
 * Builds a target specification. `directions[k]` is 0 for maximize and 1
 * for minimize.
 *
 * # Safety
 * `targets`, `alpha`, `beta` and `directions` must each hold `count`
 * elements; `out` must be a valid pointer.
 */
DtaigenStatus dtaigen_targets_new(const double *targets,
                                  const double *alpha,
                                  const double *beta,
                                  const int32_t *directions,
                                  size_t count,
                                  DtaigenTargets **out);

/**
 * Number of objectives, or 0 for a null handle.
 *
 * # Safety
 * `targets` must be null or a live handle.
 */
size_t dtaigen_targets_count(const DtaigenTargets *targets);

/**
 * Copies the target values into `out` (`count` elements).
 *
 * # Safety
 * `targets` must be a live handle; `out` must hold the objective count.
 */
DtaigenStatus dtaigen_targets_values(const DtaigenTargets *targets, double *out);

/**
 * # Safety
 * `targets` must be null or a handle not yet freed.
 */
void dtaigen_targets_free(DtaigenTargets *targets);

/**
 * Achievement ratios of an `n x T` performance matrix into `out` (`n x T`).
 *
 * # Safety
 * `perf` and `out` must hold `n * T` elements.
 */
DtaigenStatus dtaigen_target_ratios(const DtaigenTargets *targets,
                                    const double *perf,
                                    size_t n,
                                    double *out);

/**
 * DTAI of each of `n` designs, and optionally `dDTAI/dp` (`n x T`).
 *
 * # Safety
 * `perf` must hold `n * T` elements, `out_dtai` `n` elements, and
 * `out_grad` must be null or hold `n * T` elements.
 */
DtaigenStatus dtaigen_dtai(const DtaigenTargets *targets,
                           const double *perf,
                           size_t n,
                           double *out_dtai,
                           double *out_grad);

/**
 * Quality-weighted DPP loss of a `b x d` batch with qualities `q`, and
 * optionally its gradients with respect to the batch and the qualities.
 *
 * # Safety
 * `x` must hold `b * d` elements and `q` `b`; `out_loss` must be valid;
 * `out_grad_x` (`b * d`) and `out_grad_q` (`b`) may be null.
 */
DtaigenStatus dtaigen_dpp_loss(const double *x,
                               size_t b,
                               size_t d,
                               const double *q,
                               double sigma,
                               double gamma_q,
                               double jitter,
                               double *out_loss,
                               double *out_grad_x,
                               double *out_grad_q);

/**
 * Exact hypervolume of `n` maximization-form points in `t` objectives.
 *
 * # Safety
 * `points` must hold `n * t` elements, `reference` `t`; `out` must be valid.
 */
DtaigenStatus dtaigen_hypervolume_exact(const double *points,
                                        size_t n,
                                        size_t t,
                                        const double *reference,
                                        double *out);

/**
 * Monte Carlo hypervolume inside the box `[reference, bound]`.
 *
 * # Safety
 * `points` must hold `n * t` elements, `reference` and `bound` `t` each;
 * `out` must be valid.
 */
DtaigenStatus dtaigen_hypervolume_monte_carlo(const double *points,
                                              size_t n,
                                              size_t t,
                                              const double *reference,
                                              const double *bound,
                                              size_t samples,
                                              uint64_t seed,
                                              double *out);

/**
 * Exact oracle of the built-in `ring8` problem: three performances and a
 * feasibility flag for an 8-variable design in the unit box.
 *
 * # Safety
 * `x` must hold 8 elements, `out_perf` 3; `out_feasible` must be valid.
 */
DtaigenStatus dtaigen_ring8_eval(const double *x, double *out_perf, bool *out_feasible);

/**
 * Synthesizes `n` labeled rows of a built-in problem.
 *
 * # Safety
 * `problem` must be a NUL-terminated string; `out` must be valid.
 */
DtaigenStatus dtaigen_dataset_synthetic(const char *problem,
                                        size_t n,
                                        uint64_t seed,
                                        DtaigenDataset **out);

/**
 * Loads a CSV dataset with column roles given as a JSON schema document.
 *
 * # Safety
 * `csv_path` and `schema_json` must be NUL-terminated; `out` must be valid.
 */
DtaigenStatus dtaigen_dataset_load(const char *csv_path,
                                   const char *schema_json,
                                   DtaigenDataset **out);

/**
 * Row count, or 0 for a null handle.
 *
 * # Safety
 * `data` must be null or a live handle.
 */
size_t dtaigen_dataset_rows(const DtaigenDataset *data);

/**
 * Encoded design width, or 0 for a null handle.
 *
 * # Safety
 * `data` must be null or a live handle.
 */
size_t dtaigen_dataset_width(const DtaigenDataset *data);

/**
 * Objective count, or 0 for a null handle.
 *
 * # Safety
 * `data` must be null or a live handle.
 */
size_t dtaigen_dataset_objectives(const DtaigenDataset *data);

/**
 * Copies the encoded `rows x width` design matrix into `out`.
 *
 * # Safety
 * `data` must be a live handle and `out` hold `rows * width` elements.
 */
DtaigenStatus dtaigen_dataset_designs(const DtaigenDataset *data, double *out);

/**
 * Targets at `percentile` of the feasible rows, with per-objective `alpha`
 * and `beta`.
 *
 * # Safety
 * `data` must be a live handle; `alpha` and `beta` must hold one value per
 * objective; `out` must be valid.
 */
DtaigenStatus dtaigen_dataset_targets(const DtaigenDataset *data,
                                      double percentile,
                                      const double *alpha,
                                      const double *beta,
                                      DtaigenTargets **out);

/**
 * # Safety
 * `data` must be null or a handle not yet freed.
 */
void dtaigen_dataset_free(DtaigenDataset *data);

/**
 * Loads a generator checkpoint written by the `train` command.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be valid.
 */
DtaigenStatus dtaigen_generator_load(const char *path, DtaigenGenerator **out);

/**
 * Encoded design width produced by the generator, or 0 for null.
 *
 * # Safety
 * `generator` must be null or a live handle.
 */
size_t dtaigen_generator_width(const DtaigenGenerator *generator);

/**
 * Samples `n` designs in data units into `out` (`n x width`). With `hard`,
 * categorical groups are emitted one-hot.
 *
 * # Safety
 * `generator` must be a live handle and `out` hold `n * width` elements.
 */
DtaigenStatus dtaigen_generator_sample(const DtaigenGenerator *generator,
                                       size_t n,
                                       uint64_t seed,
                                       bool hard,
                                       double *out);

/**
 * # Safety
 * `generator` must be null or a handle not yet freed.
 */
void dtaigen_generator_free(DtaigenGenerator *generator);

/**
 * Scores `m` designs (data units, `m x width`) with the exact oracle of
 * `problem`, relative to `data` and `targets`.
 *
 * # Safety
 * Handles must be live, `problem` NUL-terminated, `designs` must hold
 * `m * width` elements and `out` must be valid.
 */
DtaigenStatus dtaigen_evaluate(const DtaigenDataset *data,
                               const DtaigenTargets *targets,
                               const double *designs,
                               size_t m,
                               const char *problem,
                               DtaigenMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DTAIGEN_H */
