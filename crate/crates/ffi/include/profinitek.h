#ifndef PROFINITEK_H
#define PROFINITEK_H

/* Generated by cbindgen from profinitek-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible entry point.
typedef enum PfkStatus {
  PFK_OK = 0,
  PFK_INVALID_ARGUMENT = 1,
  PFK_PARSE_ERROR = 2,
  PFK_RECONSTRUCTION_ERROR = 3,
  PFK_INTERNAL_ERROR = 4,
} PfkStatus;

// Opaque completion chain handle.
typedef struct PfkChain PfkChain;

// Opaque K-data handle.
typedef struct PfkKData PfkKData;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Borrowed pointer to the thread-local message for the most recent
// failure; valid until the next failing call on the same thread.
const char *pfk_last_error_message(void);

// Generates the seeded completion-chain fixture with the given shape
// parameters. `primes` points at `n_primes` prime numbers.
//
// # Safety
// `primes` must be valid for `n_primes` reads and `out` must be a valid
// destination pointer.
enum PfkStatus pfk_chain_generate(uint64_t seed,
                                  size_t rank,
                                  const uint64_t *primes,
                                  size_t n_primes,
                                  size_t depth,
                                  uint32_t max_exp,
                                  struct PfkChain **out);

// Parses a chain from its JSON fixture representation.
//
// # Safety
// `json` must be a valid NUL-terminated string and `out` a valid
// destination pointer.
enum PfkStatus pfk_chain_from_json(const char *json, struct PfkChain **out);

// Serializes a chain into the canonical JSON fixture text.
//
// # Safety
// `chain` must be a live handle and `out` a valid destination pointer.
enum PfkStatus pfk_chain_to_json(const struct PfkChain *chain, char **out);

// Number of stored levels; zero for a null handle.
//
// # Safety
// `chain` must be a live handle or null.
size_t pfk_chain_depth(const struct PfkChain *chain);

// Ambient rank of the chain; zero for a null handle.
//
// # Safety
// `chain` must be a live handle or null.
size_t pfk_chain_ambient_rank(const struct PfkChain *chain);

// Computes the K-data of a chain up to the given exterior degree.
//
// # Safety
// `chain` must be a live handle and `out` a valid destination pointer.
enum PfkStatus pfk_kdata_from_chain(const struct PfkChain *chain,
                                    size_t max_degree,
                                    struct PfkKData **out);

// Parses K-data from its JSON dump; `strip_provenance != 0` loads it as
// plain invariant data carrying no certification.
//
// # Safety
// `json` must be a valid NUL-terminated string and `out` a valid
// destination pointer.
enum PfkStatus pfk_kdata_from_json(const char *json,
                                   uint8_t strip_provenance,
                                   struct PfkKData **out);

// Serializes K-data into the canonical JSON dump text.
//
// # Safety
// `kdata` must be a live handle and `out` a valid destination pointer.
enum PfkStatus pfk_kdata_to_json(const struct PfkKData *kdata, char **out);

// Reconstructs a completion chain from K-data by per-prime restriction and
// the level-intersection search.
//
// # Safety
// `kdata` must be a live handle and `out` a valid destination pointer.
enum PfkStatus pfk_reconstruct_pro_n(const struct PfkKData *kdata,
                                     size_t depth,
                                     int64_t coeff_bound,
                                     size_t budget,
                                     struct PfkChain **out);

// Reconstructs a completion chain through the codegree-one identification.
//
// # Safety
// `kdata` must be a live handle and `out` a valid destination pointer.
enum PfkStatus pfk_reconstruct_appendix(const struct PfkKData *kdata,
                                        size_t depth,
                                        struct PfkChain **out);

// Mutual-cofinality verdict between two chains at the given probe depth;
// writes 1 for equivalent and 0 otherwise.
//
// # Safety
// Both handles must be live and `out` a valid destination pointer.
enum PfkStatus pfk_cofinal_equivalent(const struct PfkChain *left,
                                      const struct PfkChain *right,
                                      size_t depth,
                                      uint8_t *out);

// Releases a chain handle. Null is ignored.
//
// # Safety
// `chain` must be a handle from this library, not yet freed.
void pfk_chain_free(struct PfkChain *chain);

// Releases a K-data handle. Null is ignored.
//
// # Safety
// `kdata` must be a handle from this library, not yet freed.
void pfk_kdata_free(struct PfkKData *kdata);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must be a string returned by this library, not yet freed.
void pfk_string_free(char *s);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* PROFINITEK_H */
