#ifndef HESEARCH_H
#define HESEARCH_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum HsStatus {
  HS_STATUS_OK = 0,
  // A required pointer argument was NULL.
  HS_STATUS_NULL_POINTER = 1,
  // An argument was out of range, not UTF-8, or named nothing known.
  HS_STATUS_INVALID_ARGUMENT = 2,
  // Key material does not match, or a secret key is required.
  HS_STATUS_KEY_MISMATCH = 3,
  // Encryption, evaluation or decryption failed.
  HS_STATUS_CRYPTO = 4,
  // Input bytes could not be decoded.
  HS_STATUS_MALFORMED = 5,
  // The search protocol was violated or the peer reported an error.
  HS_STATUS_PROTOCOL = 6,
  // Connection, framing or timeout failure.
  HS_STATUS_TRANSPORT = 7,
  // A Rust panic was caught at the boundary.
  HS_STATUS_PANIC = 8,
} HsStatus;

// An encrypted dataset.
typedef struct HsDataset HsDataset;

// Key material bound to its parameter set.
typedef struct HsKeys HsKeys;

// Server side of one search, driven frame by frame.
typedef struct HsServer HsServer;

// Heap bytes owned by the caller.
typedef struct HsBuffer {
  uint8_t *data;
  size_t len;
} HsBuffer;

// Outcome of a completed search.
typedef struct HsSearchResult {
  bool found;
  // Leftmost matching index; zero when `found` is false.
  uint64_t index;
  // Protocol messages excluding the initial request.
  uint64_t messages;
  uint64_t bytes_up;
  uint64_t bytes_down;
} HsSearchResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or NULL after a
// success. The pointer stays valid until the next call on the same thread.
const char *hs_last_error(void);

// Library version as a static NUL-terminated string.
const char *hs_version(void);

// # Safety
// `buf` must be NULL or point to a buffer filled by this library that has
// not been freed yet. The buffer is reset to empty.
void hs_buffer_free(struct HsBuffer *buf);

// Generates a key set for a named preset ("plain", "toy-insecure", "desk",
// "desk-1" .. "desk-8") from a deterministic seed.
//
// # Safety
// `preset` must be a NUL-terminated string and `out_keys` writable.
enum HsStatus hs_keys_generate(const char *preset, uint64_t seed, struct HsKeys **out_keys);

// Reads a key file image (with or without the secret key).
//
// # Safety
// `data` must point to `len` readable bytes and `out_keys` be writable.
enum HsStatus hs_keys_load(const uint8_t *data, size_t len, struct HsKeys **out_keys);

// Serializes the keys; the secret key is included only when
// `include_secret` is true and the handle holds one.
//
// # Safety
// `keys` must be a live handle and `out_buf` writable.
enum HsStatus hs_keys_save(const struct HsKeys *keys,
                           bool include_secret,
                           struct HsBuffer *out_buf);

// # Safety
// `keys` must be NULL or a live handle.
bool hs_keys_has_secret(const struct HsKeys *keys);

// # Safety
// `keys` must be NULL or a handle not freed before.
void hs_keys_free(struct HsKeys *keys);

// Encrypts one value into a serialized ciphertext.
//
// # Safety
// `keys` must be a live handle and `out_buf` writable.
enum HsStatus hs_encrypt(const struct HsKeys *keys, double value, struct HsBuffer *out_buf);

// Decrypts a serialized ciphertext; needs the secret key.
//
// # Safety
// `keys` must be a live handle, `data` point to `len` readable bytes and
// `out_value` be writable.
enum HsStatus hs_decrypt(const struct HsKeys *keys,
                         const uint8_t *data,
                         size_t len,
                         double *out_value);

// Encrypts `count` values into a dataset.
//
// # Safety
// `values` must point to `count` readable doubles and `out_data` be
// writable.
enum HsStatus hs_dataset_encrypt(const struct HsKeys *keys,
                                 const double *values,
                                 size_t count,
                                 struct HsDataset **out_data);

// Reads a dataset file image written by [`hs_dataset_save`] or the CLI.
//
// # Safety
// `keys` must be a live handle, `data` point to `len` readable bytes and
// `out_data` be writable.
enum HsStatus hs_dataset_load(const struct HsKeys *keys,
                              const uint8_t *data,
                              size_t len,
                              struct HsDataset **out_data);

// # Safety
// Both handles must be live and `out_buf` writable.
enum HsStatus hs_dataset_save(const struct HsDataset *dataset,
                              const struct HsKeys *keys,
                              struct HsBuffer *out_buf);

// Number of records, or 0 for NULL.
//
// # Safety
// `dataset` must be NULL or a live handle.
size_t hs_dataset_len(const struct HsDataset *dataset);

// # Safety
// `dataset` must be NULL or a handle not freed before.
void hs_dataset_free(struct HsDataset *dataset);

// Starts the server side of one search. `expected_gap` is the typical
// magnitude of a non-matching difference; pass 1 to disable normalization.
// The handle keeps its own references, so `keys` and `dataset` may be
// freed afterwards.
//
// # Safety
// Both handles must be live and `out_server` writable.
enum HsStatus hs_server_new(const struct HsKeys *keys,
                            const struct HsDataset *dataset,
                            double expected_gap,
                            struct HsServer **out_server);

// Feeds one received frame payload to the server. On success `out_reply`
// holds the frame to send back (empty when there is none). On failure the
// status describes the error and `out_reply` holds an error frame for the
// peer. `out_done` becomes true once the session has ended either way.
//
// # Safety
// `server` must be a live handle, `frame` point to `len` readable bytes,
// and the two output pointers be writable.
enum HsStatus hs_server_handle(struct HsServer *server,
                               const uint8_t *frame,
                               size_t len,
                               struct HsBuffer *out_reply,
                               bool *out_done);

// # Safety
// `server` must be NULL or a handle not freed before.
void hs_server_free(struct HsServer *server);

// Serves `sessions` TCP connections on `listen` (0 means forever),
// blocking the calling thread.
//
// # Safety
// Both handles must be live and `listen` a NUL-terminated string.
enum HsStatus hs_serve_tcp(const struct HsKeys *keys,
                           const struct HsDataset *dataset,
                           const char *listen,
                           double expected_gap,
                           uint64_t sessions);

// Runs a complete search against a TCP server. `epsilon <= 0` selects the
// backend default zero test; `robust` decrypts both children at each step.
//
// # Safety
// `keys` must be a live handle holding a secret key, `connect` a
// NUL-terminated string and `out_result` writable.
enum HsStatus hs_search_tcp(const struct HsKeys *keys,
                            const char *connect,
                            double target,
                            double epsilon,
                            bool robust,
                            struct HsSearchResult *out_result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HESEARCH_H */
