#ifndef KERNELGAMMA_H
#define KERNELGAMMA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum KgStatus {
  KG_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  KG_STATUS_NULL_POINTER = 1,
  KG_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Malformed or inconsistent input data.
   */
  KG_STATUS_DATA = 3,
  /**
   * Degenerate geometry, rank-zero class, or solver failure.
   */
  KG_STATUS_NUMERICAL = 4,
  KG_STATUS_IO = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  KG_STATUS_PANIC = 6,
} KgStatus;

/**
 * Which inter-class distance the γ estimate uses.
 */
typedef enum KgVariant {
  KG_VARIANT_AVG = 0,
  KG_VARIANT_MIN = 1,
} KgVariant;

/**
 * Opaque labeled dataset.
 */
typedef struct KgDataset KgDataset;

/**
 * Opaque trained KOS model.
 */
typedef struct KgKosModel KgKosModel;

/**
 * Opaque trained one-vs-one SVM.
 */
typedef struct KgSvmModel KgSvmModel;

/**
 * Scalar summary of the class geometry.
 */
typedef struct KgGeometry {
  size_t n_classes;
  double d_max;
  double d_min;
  double d_av;
} KgGeometry;

/**
 * Closed-form γ and the quantities it was computed from.
 */
typedef struct KgEstimate {
  double gamma;
  double sigma;
  double d_max;
  double d_used;
} KgEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failed call on this thread, or NULL after a
 * success. Valid until the next call into this library on the same thread.
 */
const char *kg_last_error(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void kg_string_free(char *s);

/**
 * Parses LIBSVM sparse text (`label idx:value ...` per line).
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum KgStatus kg_dataset_parse_sparse(const char *text_ptr, struct KgDataset **out);

/**
 * Parses comma-separated text with the label in column `label_column`.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum KgStatus kg_dataset_parse_csv(const char *text_ptr,
                                   size_t label_column,
                                   struct KgDataset **out);

/**
 * Builds a dataset from a row-major `n_rows × n_cols` matrix and class ids.
 *
 * # Safety
 * `features` must hold `n_rows * n_cols` values and `labels` `n_rows`.
 */
enum KgStatus kg_dataset_from_dense(const double *features,
                                    size_t n_rows,
                                    size_t n_cols,
                                    const size_t *labels,
                                    struct KgDataset **out);

/**
 * Min-max scales every feature of `ds` into `[lo, hi]` as a new dataset.
 *
 * # Safety
 * `ds` must be a live handle; `out` must be writable.
 */
enum KgStatus kg_dataset_scale(const struct KgDataset *ds,
                               double lo,
                               double hi,
                               struct KgDataset **out);

/**
 * Number of samples, or 0 for NULL.
 *
 * # Safety
 * `ds` must be NULL or a live handle.
 */
size_t kg_dataset_len(const struct KgDataset *ds);

/**
 * Feature dimension, or 0 for NULL.
 *
 * # Safety
 * `ds` must be NULL or a live handle.
 */
size_t kg_dataset_feature_dim(const struct KgDataset *ds);

/**
 * Number of classes, or 0 for NULL.
 *
 * # Safety
 * `ds` must be NULL or a live handle.
 */
size_t kg_dataset_n_classes(const struct KgDataset *ds);

/**
 * Serializes the dataset to its versioned JSON form.
 *
 * # Safety
 * `ds` must be a live handle; free `*out` with [`kg_string_free`].
 */
enum KgStatus kg_dataset_to_json(const struct KgDataset *ds, char **out);

/**
 * # Safety
 * `ds` must be NULL or a handle not yet freed.
 */
void kg_dataset_free(struct KgDataset *ds);

/**
 * Class geometry of `ds` (exact pairwise computation).
 *
 * # Safety
 * `ds` must be a live handle; `out` must be writable.
 */
enum KgStatus kg_geometry(const struct KgDataset *ds, struct KgGeometry *out);

/**
 * Closed-form γ for `ds` as given (no scaling is applied).
 *
 * # Safety
 * `ds` must be a live handle; `out` must be writable.
 */
enum KgStatus kg_estimate_gamma(const struct KgDataset *ds,
                                enum KgVariant variant,
                                struct KgEstimate *out);

/**
 * Fits a KOS model. A non-finite or non-positive `imbalance_factor`
 * disables class splitting.
 *
 * # Safety
 * `ds` must be a live handle; `out` must be writable.
 */
enum KgStatus kg_kos_fit(const struct KgDataset *ds,
                         double gamma,
                         double imbalance_factor,
                         uint64_t seed,
                         struct KgKosModel **out);

/**
 * Predicts the class of one `dim`-dimensional point.
 *
 * # Safety
 * `model` must be a live handle, `x` must hold `dim` values.
 */
enum KgStatus kg_kos_predict(const struct KgKosModel *model,
                             const double *x,
                             size_t dim,
                             size_t *out_class);

/**
 * Predicts `n` row-major points of dimension `dim` into `out_classes`.
 *
 * # Safety
 * `xs` must hold `n * dim` values and `out_classes` room for `n`.
 */
enum KgStatus kg_kos_predict_batch(const struct KgKosModel *model,
                                   const double *xs,
                                   size_t n,
                                   size_t dim,
                                   size_t *out_classes);

/**
 * # Safety
 * `model` must be a live handle; free `*out` with [`kg_string_free`].
 */
enum KgStatus kg_kos_to_json(const struct KgKosModel *model, char **out);

/**
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void kg_kos_free(struct KgKosModel *model);

/**
 * Trains a one-vs-one SVM. Fails with `KG_STATUS_NUMERICAL` if a binary
 * problem hits the iteration cap.
 *
 * # Safety
 * `ds` must be a live handle; `out` must be writable.
 */
enum KgStatus kg_svm_train(const struct KgDataset *ds,
                           double gamma,
                           double c,
                           struct KgSvmModel **out);

/**
 * # Safety
 * `model` must be a live handle, `x` must hold `dim` values.
 */
enum KgStatus kg_svm_predict(const struct KgSvmModel *model,
                             const double *x,
                             size_t dim,
                             size_t *out_class);

/**
 * # Safety
 * `xs` must hold `n * dim` values and `out_classes` room for `n`.
 */
enum KgStatus kg_svm_predict_batch(const struct KgSvmModel *model,
                                   const double *xs,
                                   size_t n,
                                   size_t dim,
                                   size_t *out_classes);

/**
 * # Safety
 * `model` must be a live handle; free `*out` with [`kg_string_free`].
 */
enum KgStatus kg_svm_to_json(const struct KgSvmModel *model, char **out);

/**
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void kg_svm_free(struct KgSvmModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KERNELGAMMA_H */
