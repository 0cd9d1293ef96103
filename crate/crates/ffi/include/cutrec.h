#ifndef CUTREC_H
#define CUTREC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum CutrecStatus {
  CUTREC_STATUS_OK = 0,
  CUTREC_STATUS_NULL_POINTER = 1,
  CUTREC_STATUS_INVALID_ARGUMENT = 2,
  CUTREC_STATUS_IO = 3,
  CUTREC_STATUS_PARSE = 4,
  CUTREC_STATUS_CONFIG = 5,
  CUTREC_STATUS_CHECKPOINT = 6,
  CUTREC_STATUS_VERSION_MISMATCH = 7,
  CUTREC_STATUS_NON_FINITE = 8,
  CUTREC_STATUS_NO_EVALUABLE_USERS = 9,
  CUTREC_STATUS_OUT_OF_RANGE = 10,
  CUTREC_STATUS_PANIC = 11,
  CUTREC_STATUS_INTERNAL = 12,
} CutrecStatus;

/*
 Cross-domain dataset with its train/valid/test split.
 */
typedef struct CutrecDataset CutrecDataset;

/*
 Trained model plus its cached target-domain scoring embeddings.
 */
typedef struct CutrecModel CutrecModel;

/*
 Test-set metrics (means and population standard deviations over users).
 */
typedef struct CutrecMetrics {
  double recall;
  double recall_std;
  double hr;
  double hr_std;
  double ndcg;
  double ndcg_std;
  uintptr_t k;
  uintptr_t users;
} CutrecMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *cutrec_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *cutrec_version(void);

/*
 Loads a dataset archive directory written by `cutrec ingest` or `cutrec synth`.

 # Safety
 `dir` must be a NUL-terminated string; `out` must be writable.
 */
enum CutrecStatus cutrec_dataset_load(const char *dir, struct CutrecDataset **out);

/*
 Generates a synthetic dataset in memory. `config_json` is a synth config
 object or NULL for defaults.

 # Safety
 `config_json` must be NULL or NUL-terminated; `out` must be writable.
 */
enum CutrecStatus cutrec_dataset_synth(const char *config_json, struct CutrecDataset **out);

/*
 Number of target-domain users (target-only plus overlapping).

 # Safety
 `ds` must be NULL or a live dataset handle.
 */
uintptr_t cutrec_dataset_n_target_users(const struct CutrecDataset *ds);

/*
 Number of target-domain items.

 # Safety
 `ds` must be NULL or a live dataset handle.
 */
uintptr_t cutrec_dataset_n_target_items(const struct CutrecDataset *ds);

/*
 Number of users shared by both domains.

 # Safety
 `ds` must be NULL or a live dataset handle.
 */
uintptr_t cutrec_dataset_n_overlap_users(const struct CutrecDataset *ds);

/*
 # Safety
 `ds` must be NULL or a handle not yet freed.
 */
void cutrec_dataset_free(struct CutrecDataset *ds);

/*
 Runs both training phases. `config_json` holds an optional `preset` key
 plus training-field overrides, or is NULL for defaults.

 # Safety
 `ds` must be a live dataset; `config_json` NULL or NUL-terminated; `out` writable.
 */
enum CutrecStatus cutrec_model_train(const struct CutrecDataset *ds,
                                     const char *config_json,
                                     struct CutrecModel **out);

/*
 Loads a TARGET or CUT checkpoint against the dataset it was trained on.

 # Safety
 `ds` must be a live dataset; `path` NUL-terminated; `out` writable.
 */
enum CutrecStatus cutrec_model_load(const struct CutrecDataset *ds,
                                    const char *path,
                                    struct CutrecModel **out);

/*
 Writes a CUT model checkpoint.

 # Safety
 `model` must be a live handle; `path` NUL-terminated.
 */
enum CutrecStatus cutrec_model_save(const struct CutrecModel *model, const char *path);

/*
 Top-`k` target items for target-local user `user`, hiding the user's
 train and valid items. Writes up to `k` indices to `items` and the count
 to `n_written`.

 # Safety
 `model`, `ds` live handles; `items` has room for `k` entries; `n_written` writable.
 */
enum CutrecStatus cutrec_model_recommend(const struct CutrecModel *model,
                                         const struct CutrecDataset *ds,
                                         uintptr_t user,
                                         uintptr_t k,
                                         uintptr_t *items,
                                         uintptr_t *n_written);

/*
 Test-set Recall/HR/NDCG@`k` with train and valid items masked.

 # Safety
 `model`, `ds` live handles; `out` writable.
 */
enum CutrecStatus cutrec_model_evaluate(const struct CutrecModel *model,
                                        const struct CutrecDataset *ds,
                                        uintptr_t k,
                                        struct CutrecMetrics *out);

/*
 # Safety
 `model` must be NULL or a handle not yet freed.
 */
void cutrec_model_free(struct CutrecModel *model);

/*
 Runs an experiment config and returns the metrics report as a JSON
 string, to be released with `cutrec_string_free`.

 # Safety
 `config_json` NUL-terminated; `out_json` writable.
 */
enum CutrecStatus cutrec_experiment_run(const char *config_json, char **out_json);

/*
 # Safety
 `s` must be NULL or a string returned by this library and not yet freed.
 */
void cutrec_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CUTREC_H */
