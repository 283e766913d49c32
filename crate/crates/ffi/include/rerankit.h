#ifndef RERANKIT_H
#define RERANKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RkStatus {
  RK_STATUS_OK = 0,
  RK_STATUS_NULL_POINTER = 1,
  RK_STATUS_INVALID_ARGUMENT = 2,
  RK_STATUS_IO = 3,
  RK_STATUS_PARSE = 4,
  RK_STATUS_VALIDATION = 5,
  RK_STATUS_DIMENSION_MISMATCH = 6,
  RK_STATUS_MISSING_DATA = 7,
  RK_STATUS_NON_FINITE = 8,
  RK_STATUS_CONFIG = 9,
  /**
   * The result is mathematically undefined, e.g. a delta against a zero baseline.
   */
  RK_STATUS_UNDEFINED = 10,
  RK_STATUS_PANIC = 99,
} RkStatus;

/**
 * Opaque relevance judgments.
 */
typedef struct RkQrels RkQrels;

/**
 * Opaque ranked run.
 */
typedef struct RkRun RkRun;

/**
 * Opaque scorer parameters.
 */
typedef struct RkScorer RkScorer;

/**
 * Objective settings; obtain defaults from [`rk_objective_default`].
 */
typedef struct RkObjective {
  double tau_pair;
  double tau_teacher;
  double tau_point;
  double lambda_teacher;
  double lambda_point;
  double soft_negative_target;
  double negative_weight;
  bool enable_pair;
  bool enable_teacher;
  bool enable_point;
} RkObjective;

typedef struct RkLoss {
  double pair;
  double teacher;
  double point;
  double total;
} RkLoss;

typedef struct RkSeparation {
  double mean_gap;
  double overlap;
  double auc;
} RkSeparation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into this library from the same thread.
 */
const char *rk_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rk_version(void);

struct RkObjective rk_objective_default(void);

/**
 * Seeded random scorer of dimension `dim`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum RkStatus rk_scorer_init(size_t dim, uint64_t seed, struct RkScorer **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum RkStatus rk_scorer_load(const char *path, struct RkScorer **out);

/**
 * # Safety
 * `scorer` must come from this library; `path` must be NUL-terminated.
 */
enum RkStatus rk_scorer_save(const struct RkScorer *scorer, const char *path);

/**
 * # Safety
 * `scorer` must be NULL or a handle from this library not yet freed.
 */
void rk_scorer_free(struct RkScorer *scorer);

/**
 * Feature dimension of the scorer, or 0 for NULL.
 *
 * # Safety
 * `scorer` must be NULL or a live handle.
 */
size_t rk_scorer_dim(const struct RkScorer *scorer);

/**
 * Scores one pair: `score = logit_yes − logit_no`. Any of the three outputs may be NULL.
 *
 * # Safety
 * `q` and `v` must each point to `dim` doubles.
 */
enum RkStatus rk_scorer_score(const struct RkScorer *scorer,
                              const double *q,
                              const double *v,
                              size_t dim,
                              double *logit_yes,
                              double *logit_no,
                              double *score);

/**
 * # Safety
 * `path` must be NUL-terminated and `out` writable.
 */
enum RkStatus rk_run_load(const char *path, struct RkRun **out);

/**
 * # Safety
 * `run` must be NULL or a live handle.
 */
size_t rk_run_num_queries(const struct RkRun *run);

/**
 * # Safety
 * `run` must be NULL or a handle from this library not yet freed.
 */
void rk_run_free(struct RkRun *run);

/**
 * # Safety
 * `path` must be NUL-terminated and `out` writable.
 */
enum RkStatus rk_qrels_load(const char *path, struct RkQrels **out);

/**
 * # Safety
 * `qrels` must be NULL or a handle from this library not yet freed.
 */
void rk_qrels_free(struct RkQrels *qrels);

/**
 * Mean Recall@k and nDCG@k over queries with at least one relevant judgment.
 *
 * # Safety
 * Handles must be live; `recall` and `ndcg` must be writable.
 */
enum RkStatus rk_eval(const struct RkRun *run,
                      const struct RkQrels *qrels,
                      size_t k,
                      double *recall,
                      double *ndcg);

/**
 * Composite group loss. `score_grads` may be NULL; otherwise it receives
 * `n` derivatives of the total loss with respect to each score.
 *
 * # Safety
 * `scores`, `teacher_probs` and `labels` must each hold `n` values.
 */
enum RkStatus rk_group_loss(const double *scores,
                            const double *teacher_probs,
                            const uint8_t *labels,
                            size_t n,
                            size_t positive_index,
                            const struct RkObjective *objective,
                            struct RkLoss *out,
                            double *score_grads);

/**
 * `100·(method − baseline)/baseline`; `RK_STATUS_UNDEFINED` when baseline ≤ 0.
 *
 * # Safety
 * `out` must be writable.
 */
enum RkStatus rk_delta_pct(double baseline, double method, double *out);

/**
 * Learning rate at a 0-based step under linear warmup then cosine decay.
 *
 * # Safety
 * `out` must be writable.
 */
enum RkStatus rk_lr_at(size_t step,
                       size_t total_steps,
                       double base_lr,
                       double warmup_proportion,
                       double *out);

/**
 * # Safety
 * `relevant` and `nonrelevant` must hold `n_relevant` and `n_nonrelevant` values.
 */
enum RkStatus rk_separation(const double *relevant,
                            size_t n_relevant,
                            const double *nonrelevant,
                            size_t n_nonrelevant,
                            struct RkSeparation *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RERANKIT_H */
