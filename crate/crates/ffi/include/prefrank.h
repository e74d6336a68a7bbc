#ifndef PREFRANK_H
#define PREFRANK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result codes shared by every fallible call.
 */
typedef enum PrStatus {
  PR_STATUS_OK = 0,
  PR_STATUS_NULL_POINTER = 1,
  PR_STATUS_INVALID_ARGUMENT = 2,
  PR_STATUS_IO = 3,
  PR_STATUS_FORMAT = 4,
  PR_STATUS_DIMENSION_MISMATCH = 5,
  PR_STATUS_DEGENERATE = 6,
  PR_STATUS_PANIC = 7,
} PrStatus;

/**
 * A loaded reward head.
 */
typedef struct PrHead PrHead;

/**
 * A quadrature rule of fixed order.
 */
typedef struct PrQuadrature PrQuadrature;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next failing call on the same thread.
 */
const char *pr_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *pr_version(void);

/**
 * Loads a `PRNH` checkpoint.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum PrStatus pr_head_load(const char *path, struct PrHead **out);

/**
 * Embedding dimension the head expects; 0 for a null handle.
 *
 * # Safety
 * `head` must be null or a live handle.
 */
uintptr_t pr_head_input_dim(const struct PrHead *head);

/**
 * Scores one embedding.
 *
 * # Safety
 * `head` must be a live handle, `embedding` must hold `len` floats, and
 * `mu` / `sigma` must be writable.
 */
enum PrStatus pr_head_forward(const struct PrHead *head,
                              const float *embedding_ptr,
                              uintptr_t len,
                              double *mu,
                              double *sigma);

/**
 * # Safety
 * `head` must be null or a handle not yet freed.
 */
void pr_head_free(struct PrHead *head);

/**
 * Builds a quadrature rule of the given order (1 to 200).
 *
 * # Safety
 * `out` must be writable.
 */
enum PrStatus pr_quadrature_new(uintptr_t order, struct PrQuadrature **out);

/**
 * # Safety
 * `rule` must be null or a handle not yet freed.
 */
void pr_quadrature_free(struct PrQuadrature *rule);

/**
 * `sigmoid(r1 - r2)`.
 */
double pr_preference_prob_deterministic(double r1, double r2);

/**
 * Probability that a score `N(mu1, sigma1)` beats `N(mu2, sigma2)`.
 *
 * # Safety
 * `rule` must be a live handle and `out` writable.
 */
enum PrStatus pr_preference_prob(double mu1,
                                 double sigma1,
                                 double mu2,
                                 double sigma2,
                                 const struct PrQuadrature *rule,
                                 double *out);

/**
 * Negative log-probability of the observed winner (0 = a, 1 = b). A null
 * `rule` selects the deterministic logistic loss.
 *
 * # Safety
 * `head` must be a live handle, `a` and `b` must hold `len` floats each,
 * `rule` must be null or live, and `out` writable.
 */
enum PrStatus pr_pair_loss(const struct PrHead *head,
                           const float *a,
                           const float *b,
                           uintptr_t len,
                           uint32_t winner,
                           const struct PrQuadrature *rule,
                           double *out);

/**
 * Spearman's rho with average ranks for ties.
 *
 * # Safety
 * `x` and `y` must hold `n` doubles; `out` must be writable.
 */
enum PrStatus pr_spearman(const double *x, const double *y, uintptr_t n, double *out);

/**
 * Kendall's tau-b.
 *
 * # Safety
 * As [`pr_spearman`].
 */
enum PrStatus pr_kendall(const double *x, const double *y, uintptr_t n, double *out);

/**
 * Mean squared difference after min-max scaling each side to `[0, 1]`.
 *
 * # Safety
 * As [`pr_spearman`].
 */
enum PrStatus pr_normalized_mse(const double *x, const double *y, uintptr_t n, double *out);

/**
 * Majority fraction of a vote split.
 *
 * # Safety
 * `out` must be writable.
 */
enum PrStatus pr_agreement(uint32_t votes_a, uint32_t votes_b, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PREFRANK_H */
