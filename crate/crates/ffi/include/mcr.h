#ifndef MCR_H
#define MCR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum McrStatus {
  MCR_STATUS_OK = 0,
  MCR_STATUS_NULL_ARGUMENT = 1,
  MCR_STATUS_INVALID_UTF8 = 2,
  MCR_STATUS_IO = 3,
  MCR_STATUS_FORMAT = 4,
  MCR_STATUS_NOT_FOUND = 5,
  MCR_STATUS_UNSCORABLE = 6,
  MCR_STATUS_INVALID_ARGUMENT = 7,
  MCR_STATUS_EMPTY_CORPUS = 8,
  MCR_STATUS_PANIC = 99,
} McrStatus;

/**
 * Collects documents before building an index.
 */
typedef struct McrBuilder McrBuilder;

/**
 * Loaded knowledge base.
 */
typedef struct McrIndex McrIndex;

/**
 * Ranked query results.
 */
typedef struct McrResults McrResults;

typedef struct McrQueryOptions {
  size_t top;
  size_t candidates;
  bool include_self;
} McrQueryOptions;

typedef struct McrStats {
  uint64_t documents;
  uint64_t words;
  uint64_t tokens;
} McrStats;

typedef struct McrComparison {
  double a_to_b;
  double b_to_a;
  double raw;
  double percent;
} McrComparison;

/**
 * One ranked result. String pointers borrow from the owning results
 * handle and stay valid until it is freed.
 */
typedef struct McrResult {
  size_t rank;
  const char *article_id;
  /**
   * Empty string when the article has no title.
   */
  const char *title;
  double percent;
  /**
   * Solution-to-target activation.
   */
  double s;
  /**
   * Target-to-solution activation.
   */
  double t;
  double raw;
} McrResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after success.
 * Valid until the next `mcr_*` call on the same thread.
 */
const char *mcr_last_error_message(void);

struct McrQueryOptions mcr_query_options_default(void);

struct McrBuilder *mcr_builder_new(bool lowercase, size_t min_token_len);

/**
 * Adds a document. `title` may be null.
 *
 * # Safety
 * `builder` must come from [`mcr_builder_new`]; strings must be valid.
 */
enum McrStatus mcr_builder_add(struct McrBuilder *builder,
                               const char *id,
                               const char *title,
                               const char *text);

/**
 * Builds the index and frees the builder, whatever the outcome.
 *
 * # Safety
 * `builder` must come from [`mcr_builder_new`] and not be used afterwards.
 */
enum McrStatus mcr_builder_finish(struct McrBuilder *builder, struct McrIndex **out);

/**
 * # Safety
 * `builder` must be null or come from [`mcr_builder_new`].
 */
void mcr_builder_free(struct McrBuilder *builder);

/**
 * # Safety
 * `path` must be a valid string and `out` a writable pointer.
 */
enum McrStatus mcr_index_load(const char *path, struct McrIndex **out);

/**
 * # Safety
 * `index` must be a live handle and `path` a valid string.
 */
enum McrStatus mcr_index_save(const struct McrIndex *index, const char *path);

/**
 * # Safety
 * `index` must be null or a handle not yet freed.
 */
void mcr_index_free(struct McrIndex *index);

/**
 * # Safety
 * `index` must be a live handle and `out` writable.
 */
enum McrStatus mcr_index_stats(const struct McrIndex *index, struct McrStats *out);

/**
 * Sets the attention multiplier of a word or article label.
 *
 * # Safety
 * `index` must be a live handle and `label` a valid string.
 */
enum McrStatus mcr_index_set_attention(const struct McrIndex *index,
                                       const char *label,
                                       double multiplier);

/**
 * Ranks articles against external text. `options` may be null for defaults.
 *
 * # Safety
 * Pointers must be valid; `out` receives a handle to free with
 * [`mcr_results_free`].
 */
enum McrStatus mcr_index_query_text(const struct McrIndex *index,
                                    const char *text,
                                    const struct McrQueryOptions *options,
                                    struct McrResults **out);

/**
 * Ranks articles against an indexed article.
 *
 * # Safety
 * As for [`mcr_index_query_text`].
 */
enum McrStatus mcr_index_query_article(const struct McrIndex *index,
                                       const char *article_id,
                                       const struct McrQueryOptions *options,
                                       struct McrResults **out);

/**
 * Both activation directions between two indexed articles.
 *
 * # Safety
 * Pointers must be valid.
 */
enum McrStatus mcr_index_compare(const struct McrIndex *index,
                                 const char *a,
                                 const char *b,
                                 struct McrComparison *out);

/**
 * # Safety
 * `results` must be null or a live handle.
 */
size_t mcr_results_len(const struct McrResults *results);

/**
 * Distinct query words missing from the index.
 *
 * # Safety
 * `results` must be null or a live handle.
 */
size_t mcr_results_unknown_words(const struct McrResults *results);

/**
 * # Safety
 * `results` must be a live handle and `out` writable.
 */
enum McrStatus mcr_results_get(const struct McrResults *results, size_t i, struct McrResult *out);

/**
 * # Safety
 * `results` must be null or a handle not yet freed.
 */
void mcr_results_free(struct McrResults *results);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MCR_H */
