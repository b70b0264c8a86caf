#ifndef SPECMIX_H
#define SPECMIX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum SpecmixStatus {
  SPECMIX_STATUS_OK = 0,
  SPECMIX_STATUS_NULL_POINTER = 1,
  SPECMIX_STATUS_INVALID_ARGUMENT = 2,
  SPECMIX_STATUS_DIMENSION_MISMATCH = 3,
  SPECMIX_STATUS_INFEASIBLE = 4,
  SPECMIX_STATUS_DEGENERATE = 5,
  SPECMIX_STATUS_RANK_DEFICIENT = 6,
  SPECMIX_STATUS_INTERNAL = 7,
} SpecmixStatus;

typedef enum SpecmixMetric {
  SPECMIX_METRIC_EUCLID = 0,
  SPECMIX_METRIC_NIP = 1,
  SPECMIX_METRIC_MRSA = 2,
} SpecmixMetric;

typedef enum SpecmixCountKind {
  SPECMIX_COUNT_KIND_EXACT = 0,
  SPECMIX_COUNT_KIND_AT_MOST = 1,
  SPECMIX_COUNT_KIND_AT_LEAST = 2,
} SpecmixCountKind;

typedef struct SpecmixMatrix SpecmixMatrix;

typedef struct SpecmixProblem SpecmixProblem;

typedef struct SpecmixResult SpecmixResult;

// Iteration settings; fill with `specmix_options_default` before editing.
typedef struct SpecmixOptions {
  size_t max_iterations;
  double rel_change_tol;
  bool nonnegative_b;
  bool nonnegative_a_proxy;
  enum SpecmixMetric metric;
  uint64_t seed;
} SpecmixOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer stays
// valid until the next `specmix_*` call on the same thread.
const char *specmix_last_error(void);

// Static, nul-terminated library version.
const char *specmix_version(void);

// Copies `rows × cols` column-major values into a new matrix.
enum SpecmixStatus specmix_matrix_new(size_t rows,
                                      size_t cols,
                                      const double *data,
                                      struct SpecmixMatrix **out);

void specmix_matrix_free(struct SpecmixMatrix *m);

// Rows of `m`, or 0 for null.
size_t specmix_matrix_rows(const struct SpecmixMatrix *m);

// Columns of `m`, or 0 for null.
size_t specmix_matrix_cols(const struct SpecmixMatrix *m);

// Copies the column-major values of `m` into `out`, which must hold `len == rows·cols` doubles.
enum SpecmixStatus specmix_matrix_copy(const struct SpecmixMatrix *m, double *out, size_t len);

enum SpecmixStatus specmix_options_default(struct SpecmixOptions *out);

// A problem over data `m` (bands × pixels, copied) with `rank` endmembers and default options.
enum SpecmixStatus specmix_problem_new(const struct SpecmixMatrix *m,
                                       size_t rank,
                                       struct SpecmixProblem **out);

void specmix_problem_free(struct SpecmixProblem *p);

// Appends a dictionary (bands × atoms, copied) with its count rule.
enum SpecmixStatus specmix_problem_add_dictionary(struct SpecmixProblem *p,
                                                  const struct SpecmixMatrix *atoms,
                                                  enum SpecmixCountKind kind,
                                                  size_t count);

enum SpecmixStatus specmix_problem_set_options(struct SpecmixProblem *p,
                                               const struct SpecmixOptions *opts);

// Runs the alternating factorization; on success `*out` owns the result.
enum SpecmixStatus specmix_problem_solve(const struct SpecmixProblem *p,
                                         struct SpecmixResult **out);

void specmix_result_free(struct SpecmixResult *r);

// Number of endmembers, or 0 for null.
size_t specmix_result_rank(const struct SpecmixResult *r);

// `‖M − A·Bᵀ‖_F / ‖M‖_F` of the returned factors, or NaN for null.
double specmix_result_relative_error(const struct SpecmixResult *r);

size_t specmix_result_iterations(const struct SpecmixResult *r);

bool specmix_result_converged(const struct SpecmixResult *r);

// New matrix holding `A` (bands × rank).
enum SpecmixStatus specmix_result_endmembers(const struct SpecmixResult *r,
                                             struct SpecmixMatrix **out);

// New matrix holding `B` (pixels × rank).
enum SpecmixStatus specmix_result_abundances(const struct SpecmixResult *r,
                                             struct SpecmixMatrix **out);

// For every endmember `k < len`, the dictionary (in insertion order) and atom it was taken from.
enum SpecmixStatus specmix_result_selection(const struct SpecmixResult *r,
                                            size_t *dictionaries,
                                            size_t *atoms,
                                            size_t len);

// Successive projection: writes `r` column indices of `m` into `indices`.
enum SpecmixStatus specmix_spa(const struct SpecmixMatrix *m, size_t r, size_t *indices);

// Minimum-cost assignment of each of `rows` rows to a distinct column of the
// row-major `rows × cols` table (`rows ≤ cols`).
enum SpecmixStatus specmix_hungarian(size_t rows,
                                     size_t cols,
                                     const double *costs,
                                     size_t *assignment,
                                     double *total_cost);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPECMIX_H */
