/* C interface of the urnmix Bernoulli-Laplace urn laboratory. */

#ifndef URNMIX_H
#define URNMIX_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every ABI function.
typedef enum UrnmixStatus {
  URNMIX_STATUS_OK = 0,
  URNMIX_STATUS_NULL_POINTER = 1,
  URNMIX_STATUS_INVALID_ARGUMENT = 2,
  URNMIX_STATUS_NON_ERGODIC = 3,
  URNMIX_STATUS_NUMERICAL_FAILURE = 4,
  URNMIX_STATUS_INTERNAL_PANIC = 5,
} UrnmixStatus;

// Opaque banded-kernel handle.
typedef struct UrnmixKernel UrnmixKernel;

// Opaque deterministic random stream (ChaCha8; one stream per handle).
typedef struct UrnmixRng UrnmixRng;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Version string of the underlying crate (static, NUL-terminated).
const char *urnmix_version(void);

// Builds the exact banded kernel for (n, k). The handle must be released
// with `urnmix_kernel_free`.
//
// # Safety
// `out` must be a valid pointer to an `UrnmixKernel*` slot.
enum UrnmixStatus urnmix_kernel_new(uint32_t n, uint32_t k, struct UrnmixKernel **out);

// Releases a kernel handle. A null pointer is a no-op.
//
// # Safety
// `handle` must have been returned by `urnmix_kernel_new` and not yet freed.
void urnmix_kernel_free(struct UrnmixKernel *handle);

// Urn size of the kernel, or 0 on null.
//
// # Safety
// `handle` must be a live kernel handle.
uint32_t urnmix_kernel_n(const struct UrnmixKernel *handle);

// Swap size of the kernel, or 0 on null.
//
// # Safety
// `handle` must be a live kernel handle.
uint32_t urnmix_kernel_k(const struct UrnmixKernel *handle);

// P(i, j) of the kernel (zero outside the band).
//
// # Safety
// `handle` must be a live kernel handle; `out` must point to a writable f64.
enum UrnmixStatus urnmix_kernel_prob(const struct UrnmixKernel *handle,
                                     uint32_t i,
                                     uint32_t j,
                                     double *out);

// One-shot transition probability without building a kernel.
//
// # Safety
// `out` must point to a writable f64.
enum UrnmixStatus urnmix_transition_prob(uint32_t n,
                                         uint32_t k,
                                         uint32_t i,
                                         uint32_t j,
                                         double *out);

// Fills `out[0..=n]` with the stationary law. `len` must be exactly n + 1.
//
// # Safety
// `out` must point to `len` writable f64 slots.
enum UrnmixStatus urnmix_stationary(uint32_t n, double *out, size_t len);

// TV distance between the law after t steps from x0 and stationarity.
//
// # Safety
// `handle` must be a live kernel handle; `out` must point to a writable f64.
enum UrnmixStatus urnmix_distance_from(const struct UrnmixKernel *handle,
                                       uint32_t x0,
                                       uint64_t t,
                                       double *out);

// Worst-case TV distance at time t; policy 0 = extremes, 1 = all states.
//
// # Safety
// `handle` must be a live kernel handle; `out` must point to a writable f64.
enum UrnmixStatus urnmix_worst_distance(const struct UrnmixKernel *handle,
                                        uint64_t t,
                                        uint32_t policy,
                                        double *out);

// Least t with the worst-case TV distance at most eps.
//
// # Safety
// `handle` must be a live kernel handle; `out` must point to a writable u64.
enum UrnmixStatus urnmix_mixing_time(const struct UrnmixKernel *handle,
                                     double eps,
                                     uint32_t policy,
                                     uint64_t *out);

// Creates the deterministic random stream `stream` of the generator keyed
// by `seed`. Release with `urnmix_rng_free`.
//
// # Safety
// `out` must be a valid pointer to an `UrnmixRng*` slot.
enum UrnmixStatus urnmix_rng_new(uint64_t seed, uint64_t stream, struct UrnmixRng **out);

// Releases a random stream. A null pointer is a no-op.
//
// # Safety
// `handle` must have been returned by `urnmix_rng_new` and not yet freed.
void urnmix_rng_free(struct UrnmixRng *handle);

// One step of the chain from state x.
//
// # Safety
// `rng` must be a live rng handle; `out` must point to a writable u32.
enum UrnmixStatus urnmix_step_sample(uint32_t n,
                                     uint32_t k,
                                     uint32_t x,
                                     struct UrnmixRng *rng,
                                     uint32_t *out);

// One step of the monotone coupling from the pair (x, y).
//
// # Safety
// `rng` must be a live rng handle; `out_x`/`out_y` must be writable u32.
enum UrnmixStatus urnmix_monotone_step(uint32_t n,
                                       uint32_t k,
                                       uint32_t x,
                                       uint32_t y,
                                       struct UrnmixRng *rng,
                                       uint32_t *out_x,
                                       uint32_t *out_y);

// Exact TV between the kernel rows at x0 and y0.
//
// # Safety
// `out` must point to a writable f64.
enum UrnmixStatus urnmix_last_step_tv(uint32_t n,
                                      uint32_t k,
                                      uint32_t x0,
                                      uint32_t y0,
                                      double *out);

// Exact TV between Hyper(N, K, r) and Bin(r, K/N); also returns the 4r/N
// comparison bound.
//
// # Safety
// `out_tv` and `out_bound` must point to writable f64 slots.
enum UrnmixStatus urnmix_hyper_vs_binom_tv(uint64_t population,
                                           uint64_t successes,
                                           uint64_t draws,
                                           double *out_tv,
                                           double *out_bound);

// Exact TV between Bin(k, 1/2) and its |g|-shift, with the crossing point.
//
// # Safety
// `out_tv` and `out_crossing` must point to writable slots.
enum UrnmixStatus urnmix_shifted_binom_tv(uint64_t k,
                                          int64_t g,
                                          double *out_tv,
                                          int64_t *out_crossing);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* URNMIX_H */
