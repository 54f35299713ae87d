/* C interface of the tagtrans genre-tag translation library. */

#ifndef TAGTRANS_H
#define TAGTRANS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of a fallible call.
 */
typedef enum TtStatus {
  /**
   * The call succeeded.
   */
  TtStatus_Ok = 0,
  /**
   * The call was malformed: null handle, wrong buffer size, invalid
   * argument.
   */
  TtStatus_Usage = 1,
  /**
   * The input data was unreadable or malformed.
   */
  TtStatus_Data = 2,
  /**
   * A numerical failure (non-finite parameters).
   */
  TtStatus_Numeric = 3,
} TtStatus;

/**
 * Trained logistic translation model (opaque).
 */
typedef struct TtModel TtModel;

/**
 * Canonical-form text normalizer (opaque).
 */
typedef struct TtNormalizer TtNormalizer;

/**
 * Source→target translation table (opaque).
 */
typedef struct TtTable TtTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The message of the last error on this thread, or an empty string.
 *
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *tt_last_error_message(void);

/**
 * Frees a string returned by this library. Null is a no-op.
 *
 * # Safety
 * `s` must come from a `tagtrans` call and not already be freed.
 */
void tt_string_free(char *s);

/**
 * Builds the word-free normalizer: casefolding, separator cleanup, and
 * connective unification only — no compound splitting.
 */
struct TtNormalizer *tt_normalizer_basic(void);

/**
 * Builds a full normalizer from resource files.
 *
 * `ontology_path` may be null (no pivot words). `taxonomy_paths` lists
 * `n_taxonomies` tag-system files whose tags seed the splitting trie.
 * `unigrams_path` (word-frequency list) and `assess_path` (split-assessment
 * settings) may be null for defaults. Returns null on error.
 *
 * # Safety
 * All pointers must satisfy the conventions above.
 */
struct TtNormalizer *tt_normalizer_load(const char *ontology_path,
                                        const char *const *taxonomy_paths,
                                        size_t n_taxonomies,
                                        const char *unigrams_path,
                                        const char *assess_path);

/**
 * The canonical key of a raw tag: normalized, split, sorted words.
 *
 * Returns a string to free with `tt_string_free`, or null on error
 * (degenerate tag, invalid arguments).
 *
 * # Safety
 * `normalizer` must be a live handle from this library; `raw` non-null.
 */
char *tt_normalizer_canonical_key(const struct TtNormalizer *normalizer, const char *raw);

/**
 * # Safety
 * `normalizer` must come from this library and not already be freed.
 */
void tt_normalizer_free(struct TtNormalizer *normalizer);

/**
 * Loads a translation table from its TSV export. Returns null on error.
 *
 * # Safety
 * `path` must be a non-null NUL-terminated string.
 */
struct TtTable *tt_table_load(const char *path);

/**
 * Number of target tags (the length `tt_table_score` expects).
 *
 * # Safety
 * `table` must be a live handle. Null yields 0.
 */
size_t tt_table_target_count(const struct TtTable *table);

/**
 * Name of target tag `index`; free with `tt_string_free`. Null if out of
 * range.
 *
 * # Safety
 * `table` must be a live handle.
 */
char *tt_table_target_name(const struct TtTable *table, size_t index);

/**
 * Scores one annotation against every target tag: for each target, the sum
 * of the table columns of the annotation's known tags. Unknown tags are
 * skipped, matching the command-line `translate` behavior. `out` must hold
 * exactly `tt_table_target_count` values.
 *
 * # Safety
 * Pointer conventions as above; `out` must point to `out_len` doubles.
 */
enum TtStatus tt_table_score(const struct TtTable *table,
                             const char *const *tags,
                             size_t n_tags,
                             double *out,
                             size_t out_len);

/**
 * # Safety
 * `table` must come from this library and not already be freed.
 */
void tt_table_free(struct TtTable *table);

/**
 * Loads a trained model checkpoint. Returns null on error.
 *
 * # Safety
 * `path` must be a non-null NUL-terminated string.
 */
struct TtModel *tt_model_load(const char *path);

/**
 * Number of target tags (the length `tt_model_score` expects).
 *
 * # Safety
 * `model` must be a live handle. Null yields 0.
 */
size_t tt_model_target_count(const struct TtModel *model);

/**
 * Name of target tag `index`; free with `tt_string_free`. Null if out of
 * range.
 *
 * # Safety
 * `model` must be a live handle.
 */
char *tt_model_target_name(const struct TtModel *model, size_t index);

/**
 * Scores one annotation with the model: the per-target probability that the
 * item carries each target tag. Unknown tags are skipped. `out` must hold
 * exactly `tt_model_target_count` values.
 *
 * # Safety
 * Pointer conventions as above; `out` must point to `out_len` doubles.
 */
enum TtStatus tt_model_score(const struct TtModel *model,
                             const char *const *tags,
                             size_t n_tags,
                             double *out,
                             size_t out_len);

/**
 * # Safety
 * `model` must come from this library and not already be freed.
 */
void tt_model_free(struct TtModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TAGTRANS_H */
