#ifndef UTILSEL_H
#define UTILSEL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

#define UTILSEL_REPAIR_DEDUP 1

#define UTILSEL_REPAIR_OUT_OF_RANGE_DROPPED (1 << 1)

#define UTILSEL_REPAIR_MISSING_APPENDED (1 << 2)

#define UTILSEL_REPAIR_FREE_TEXT_STRIPPED (1 << 3)

#define UTILSEL_REPAIR_UNPARSEABLE (1 << 4)

#define UTILSEL_DEFECT_IMPROPER_FORMAT 1

#define UTILSEL_DEFECT_MISSING_IDENTIFIERS (1 << 1)

#define UTILSEL_DEFECT_REPETITIVE (1 << 2)

#define UTILSEL_DEFECT_TRANSPORT (1 << 3)

/**
 * Result code of every fallible call.
 */
typedef enum UtilselStatus {
  UTILSEL_STATUS_OK = 0,
  UTILSEL_STATUS_NULL_POINTER = 1,
  UTILSEL_STATUS_INVALID_UTF8 = 2,
  UTILSEL_STATUS_INVALID_ARGUMENT = 3,
  UTILSEL_STATUS_JUDGE = 4,
  UTILSEL_STATUS_ENGINE = 5,
  UTILSEL_STATUS_PANIC = 6,
} UtilselStatus;

typedef enum UtilselTaskKind {
  UTILSEL_TASK_KIND_RANKING = 0,
  UTILSEL_TASK_KIND_SELECTION = 1,
} UtilselTaskKind;

/**
 * Passage collection handle.
 */
typedef struct UtilselCorpus UtilselCorpus;

/**
 * Output of one engine call.
 */
typedef struct UtilselResult UtilselResult;

/**
 * Window geometry handle.
 */
typedef struct UtilselWindowConfig UtilselWindowConfig;

/**
 * Produces the raw response for one window. Returns NULL to signal a
 * transport failure. The returned string must stay valid until the next
 * callback invocation or until the engine call returns.
 */
typedef const char *(*UtilselJudgeFn)(void *user_data,
                                      enum UtilselTaskKind kind,
                                      const char *system,
                                      const char *user,
                                      size_t n_passages,
                                      size_t window_index);

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *utilsel_last_error(void);

void utilsel_string_free(char *s);

enum UtilselStatus utilsel_window_config_new(size_t depth,
                                             size_t window,
                                             size_t stride,
                                             struct UtilselWindowConfig **out);

void utilsel_window_config_free(struct UtilselWindowConfig *cfg);

/**
 * Minimum and maximum window counts of the selection engine.
 */
enum UtilselStatus utilsel_window_count_bounds(const struct UtilselWindowConfig *cfg,
                                               size_t *out_min,
                                               size_t *out_max);

/**
 * Writes the ranking plan as `[start, end)` pairs. With `out_ranges` NULL
 * only the window count is reported; otherwise `capacity` is the number of
 * pairs the buffer holds (two `size_t` each).
 */
enum UtilselStatus utilsel_ranking_plan(const struct UtilselWindowConfig *cfg,
                                        size_t *out_ranges,
                                        size_t capacity,
                                        size_t *out_count);

/**
 * Parses a ranking into `out_perm`, which must hold `n` entries.
 */
enum UtilselStatus utilsel_parse_ranking(const char *text,
                                         size_t n,
                                         size_t *out_perm,
                                         uint32_t *out_repairs);

/**
 * Parses a selection into `out_selected` (room for `n` entries). The
 * pseudo-answer, when present, is returned as an owned string; otherwise
 * `*out_pseudo_answer` is set to NULL. `out_pseudo_answer` may be NULL.
 */
enum UtilselStatus utilsel_parse_selection(const char *text,
                                           size_t n,
                                           size_t *out_selected,
                                           size_t *out_len,
                                           char **out_pseudo_answer,
                                           uint32_t *out_repairs);

/**
 * Strict training-data validation; `*out_defects` is a bitmask of
 * `UTILSEL_DEFECT_*`.
 */
enum UtilselStatus utilsel_validate_generation(const char *text,
                                               enum UtilselTaskKind kind,
                                               size_t n,
                                               bool *out_passed,
                                               uint32_t *out_defects);

enum UtilselStatus utilsel_answer_em_f1(const char *prediction,
                                        const char *const *golds,
                                        size_t n_golds,
                                        uint8_t *out_em,
                                        double *out_f1);

/**
 * Monte Carlo mean window count for a profile spec (`never`, `always`,
 * `bernoulli:P`, or a histogram JSON path).
 */
enum UtilselStatus utilsel_simulate(const struct UtilselWindowConfig *cfg,
                                    const char *profile,
                                    size_t trials,
                                    uint64_t seed,
                                    double *out_mean,
                                    double *out_ci_low,
                                    double *out_ci_high);

struct UtilselCorpus *utilsel_corpus_new(void);

void utilsel_corpus_free(struct UtilselCorpus *corpus);

/**
 * Adds a passage. `title` may be NULL.
 */
enum UtilselStatus utilsel_corpus_add(struct UtilselCorpus *corpus,
                                      const char *doc_id,
                                      const char *title,
                                      const char *text);

size_t utilsel_corpus_len(const struct UtilselCorpus *corpus);

void utilsel_result_free(struct UtilselResult *result);

/**
 * Ranked ids (rerank) or the final queue (select).
 */
size_t utilsel_result_len(const struct UtilselResult *result);

/**
 * Borrowed id at position `i`, valid while the result lives; NULL when out
 * of range.
 */
const char *utilsel_result_doc_id(const struct UtilselResult *result, size_t i);

size_t utilsel_result_window_count(const struct UtilselResult *result);

/**
 * Back-to-front listwise re-ranking of `doc_ids` (first-stage order).
 */
enum UtilselStatus utilsel_rerank(const struct UtilselCorpus *corpus,
                                  const struct UtilselWindowConfig *cfg,
                                  const char *query,
                                  const char *const *doc_ids,
                                  size_t n_docs,
                                  UtilselJudgeFn judge,
                                  void *user_data,
                                  struct UtilselResult **out);

/**
 * Front-to-back utility selection of `doc_ids` (first-stage order).
 */
enum UtilselStatus utilsel_select(const struct UtilselCorpus *corpus,
                                  const struct UtilselWindowConfig *cfg,
                                  const char *query,
                                  const char *const *doc_ids,
                                  size_t n_docs,
                                  UtilselJudgeFn judge,
                                  void *user_data,
                                  struct UtilselResult **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UTILSEL_H */
