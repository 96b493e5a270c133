#ifndef IESSIC_H
#define IESSIC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IessicStatus {
  IESSIC_STATUS_OK = 0,
  IESSIC_STATUS_NULL_POINTER = 1,
  IESSIC_STATUS_INVALID_ARGUMENT = 2,
  IESSIC_STATUS_NUMERICAL = 3,
  IESSIC_STATUS_CALIBRATION_FAILED = 4,
  IESSIC_STATUS_INTERNAL = 5,
} IessicStatus;

typedef enum IessicAddressModel {
  IESSIC_ADDRESS_MODEL_IID_BITS = 0,
  IESSIC_ADDRESS_MODEL_DISTINCT_UNIFORM = 1,
} IessicAddressModel;

/**
 * Link set and Rician link abstraction.
 */
typedef struct IessicPhy IessicPhy;

/**
 * Slot trace of one tree resolution.
 */
typedef struct IessicTrace IessicTrace;

/**
 * Per-user link parameters, all linear.
 */
typedef struct IessicLinkParams {
  double gamma;
  double sigma_v2;
  double eps_self;
  double eps_cross;
  double noise_power;
} IessicLinkParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message into `buf` (NUL terminated, truncated to
 * `len`). Returns the full message length without the terminator.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t iessic_last_error_message(char *buf, size_t len);

/**
 * SSINR of `target` among users `0..n_users`. `transmitters` and
 * `cancelled` are bit masks over user ids.
 *
 * # Safety
 * `links` must point to `n_users` elements and `out` must be writable.
 */
enum IessicStatus iessic_ssinr(const struct IessicLinkParams *links,
                               size_t n_users,
                               uint64_t transmitters,
                               uint64_t cancelled,
                               size_t target,
                               double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum IessicStatus iessic_rician_ser(double gamma, double k_factor, double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum IessicStatus iessic_decode_prob(double gamma,
                                     double k_factor,
                                     uint32_t packet_len_bits,
                                     double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum IessicStatus iessic_slotted_aloha(double load, double *out);

/**
 * Create a PHY model with `link` applied to every user.
 *
 * # Safety
 * `link` must be readable and `out` writable.
 */
enum IessicStatus iessic_phy_new(const struct IessicLinkParams *link,
                                 double k_factor,
                                 uint32_t packet_len_bits,
                                 struct IessicPhy **out);

/**
 * Give `user` its own link parameters.
 *
 * # Safety
 * `phy` must come from [`iessic_phy_new`]; `link` must be readable.
 */
enum IessicStatus iessic_phy_set_user_link(struct IessicPhy *phy,
                                           size_t user,
                                           const struct IessicLinkParams *link);

/**
 * # Safety
 * `phy` must be null or come from [`iessic_phy_new`], and not be used afterwards.
 */
void iessic_phy_free(struct IessicPhy *phy);

/**
 * Resolve `n` addresses of `address_bits` bits; user `i` owns `addresses[i]`.
 *
 * # Safety
 * `addresses` must point to `n` elements and `out` must be writable.
 */
enum IessicStatus iessic_run_tree(const uint32_t *addresses,
                                  size_t n,
                                  uint8_t address_bits,
                                  bool count_idle_slots,
                                  struct IessicTrace **out);

/**
 * # Safety
 * `trace` must come from [`iessic_run_tree`]; `out` must be writable.
 */
enum IessicStatus iessic_trace_slots_used(const struct IessicTrace *trace, size_t *out);

/**
 * # Safety
 * `trace` must come from [`iessic_run_tree`]; `out` must be writable.
 */
enum IessicStatus iessic_trace_throughput(const struct IessicTrace *trace, double *out);

/**
 * Write the occupancy label, NUL terminated, into `buf`. `needed` receives
 * the label length; a too small buffer yields `InvalidArgument`.
 *
 * # Safety
 * `trace` must come from [`iessic_run_tree`]; `buf` must be valid for `len`
 * bytes or null; `needed` must be writable.
 */
enum IessicStatus iessic_trace_label(const struct IessicTrace *trace,
                                     char *buf,
                                     size_t len,
                                     size_t *needed);

/**
 * # Safety
 * `trace` must be null or come from [`iessic_run_tree`], and not be used afterwards.
 */
void iessic_trace_free(struct IessicTrace *trace);

/**
 * Exact MAC throughput by enumeration.
 *
 * # Safety
 * `out` must be writable.
 */
enum IessicStatus iessic_mac_throughput(enum IessicAddressModel model,
                                        uint8_t address_bits,
                                        size_t users,
                                        bool count_idle_slots,
                                        double *out);

/**
 * Exact total throughput by enumeration under `phy`.
 *
 * # Safety
 * `phy` must come from [`iessic_phy_new`]; `out` must be writable.
 */
enum IessicStatus iessic_total_throughput(enum IessicAddressModel model,
                                          uint8_t address_bits,
                                          size_t users,
                                          bool count_idle_slots,
                                          const struct IessicPhy *phy,
                                          double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IESSIC_H */
