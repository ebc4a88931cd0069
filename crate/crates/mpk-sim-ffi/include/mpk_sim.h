/* C interface to the MPK simulator. */

#ifndef MPK_SIM_H
#define MPK_SIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes returned by every fallible entry point.
 */
typedef enum MpkStatus {
  MPK_STATUS_OK = 0,
  MPK_STATUS_NO_FREE_KEYS = 1,
  MPK_STATUS_INVALID_KEY = 2,
  MPK_STATUS_UNMAPPED_PAGE = 3,
  MPK_STATUS_ALREADY_INITIALIZED = 4,
  MPK_STATUS_KERNEL_KEYS_UNAVAILABLE = 5,
  MPK_STATUS_VKEY_IN_USE = 6,
  MPK_STATUS_OUT_OF_PAGES = 7,
  MPK_STATUS_UNKNOWN_VKEY = 8,
  MPK_STATUS_GROUP_BUSY = 9,
  MPK_STATUS_NO_EVICTABLE_KEY = 10,
  MPK_STATUS_NOT_BEGUN = 11,
  MPK_STATUS_EXEC_ONLY_GROUP = 12,
  MPK_STATUS_OUT_OF_SPACE = 13,
  MPK_STATUS_DOUBLE_FREE = 14,
  MPK_STATUS_UNKNOWN_CHUNK = 15,
  MPK_STATUS_METADATA_PROTECTED = 16,
  MPK_STATUS_NOT_INITIALIZED = 17,
  MPK_STATUS_PARSE_ERROR = 100,
  MPK_STATUS_NULL_POINTER = 101,
  MPK_STATUS_INVALID_ARGUMENT = 102,
} MpkStatus;

typedef enum MpkAccessKind {
  MPK_ACCESS_KIND_READ = 0,
  MPK_ACCESS_KIND_WRITE = 1,
  MPK_ACCESS_KIND_FETCH = 2,
} MpkAccessKind;

typedef enum MpkReplayMode {
  MPK_REPLAY_MODE_MANAGED = 0,
  MPK_REPLAY_MODE_RAW = 1,
} MpkReplayMode;

/**
 * Opaque simulator instance.
 */
typedef struct MpkSim MpkSim;

/**
 * Page permission triple.
 */
typedef struct MpkPerm {
  bool read;
  bool write;
  bool exec;
} MpkPerm;

/**
 * Span of simulated 4 KB pages.
 */
typedef struct MpkSpan {
  uint64_t base;
  uint64_t pages;
} MpkSpan;

/**
 * PKRU-style right: access-disable and write-disable bits.
 */
typedef struct MpkRight {
  bool access_disable;
  bool write_disable;
} MpkRight;

/**
 * Handle to a chunk allocated from a page group.
 */
typedef struct MpkChunk {
  uint64_t vkey;
  uint64_t id;
  uint64_t offset;
  uint64_t size;
} MpkChunk;

/**
 * Key-cache counters.
 */
typedef struct MpkCacheStats {
  uint64_t lookups;
  uint64_t hits;
  uint64_t misses;
  uint64_t evictions;
} MpkCacheStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Create a simulator with no threads and no manager.
 */
struct MpkSim *mpk_sim_new(void);

/**
 * Destroy a simulator created by `mpk_sim_new`.
 *
 * # Safety
 * `handle` must be null or a pointer returned by `mpk_sim_new` that has
 * not been freed yet.
 */
void mpk_sim_destroy(struct MpkSim *handle);

/**
 * Spawn a simulated thread; returns its id.
 *
 * # Safety
 * `handle` must be a live simulator pointer.
 */
uint64_t mpk_sim_spawn_thread(struct MpkSim *handle);

/**
 * Initialize the virtual-key manager with the given eviction rate.
 *
 * # Safety
 * `handle` must be a live simulator pointer.
 */
enum MpkStatus mpk_sim_init(struct MpkSim *handle, uint64_t tid, double evict_rate);

/**
 * Allocate a page group; the mapped span is written to `out_span`.
 *
 * # Safety
 * `handle` must be a live simulator pointer; `out_span` may be null.
 */
enum MpkStatus mpk_sim_mmap(struct MpkSim *handle,
                            uint64_t vkey,
                            uint64_t len,
                            struct MpkPerm prot,
                            struct MpkSpan *out_span);

/**
 * # Safety
 * `handle` must be a live simulator pointer.
 */
enum MpkStatus mpk_sim_munmap(struct MpkSim *handle, uint64_t vkey);

/**
 * # Safety
 * `handle` must be a live simulator pointer.
 */
enum MpkStatus mpk_sim_begin(struct MpkSim *handle,
                             uint64_t tid,
                             uint64_t vkey,
                             struct MpkRight right);

/**
 * # Safety
 * `handle` must be a live simulator pointer.
 */
enum MpkStatus mpk_sim_end(struct MpkSim *handle, uint64_t tid, uint64_t vkey);

/**
 * # Safety
 * `handle` must be a live simulator pointer.
 */
enum MpkStatus mpk_sim_mprotect(struct MpkSim *handle,
                                uint64_t tid,
                                uint64_t vkey,
                                struct MpkPerm prot);

/**
 * Allocate a chunk from a page group; the handle is written to `out`.
 *
 * # Safety
 * `handle` must be a live simulator pointer; `out` may be null.
 */
enum MpkStatus mpk_sim_malloc(struct MpkSim *handle,
                              uint64_t vkey,
                              uint64_t size,
                              struct MpkChunk *out);

/**
 * Free a chunk previously returned by `mpk_sim_malloc`.
 *
 * # Safety
 * `handle` must be a live simulator pointer; `chunk` must be null or a
 * valid pointer to a chunk struct.
 */
enum MpkStatus mpk_sim_chunk_free(struct MpkSim *handle, const struct MpkChunk *chunk);

/**
 * Perform a user-mode access. Returns 1 if allowed, 0 if denied, -1 on
 * a bad handle or thread id.
 *
 * # Safety
 * `handle` must be a live simulator pointer.
 */
int32_t mpk_sim_access(struct MpkSim *handle, uint64_t tid, uint64_t page, enum MpkAccessKind kind);

/**
 * # Safety
 * `handle` must be a live simulator pointer.
 */
uint64_t mpk_sim_metadata_bytes(struct MpkSim *handle);

/**
 * Total modeled cycles accumulated so far.
 *
 * # Safety
 * `handle` must be a live simulator pointer.
 */
double mpk_sim_cost_total(struct MpkSim *handle);

/**
 * # Safety
 * `handle` must be a live simulator pointer; `out` may be null.
 */
enum MpkStatus mpk_sim_cache_stats(struct MpkSim *handle, struct MpkCacheStats *out);

/**
 * Replay a trace and return the JSON report through `out_json`. Pass a
 * negative `evict_rate` to use the rate from the trace's init op. The
 * returned string must be released with `mpk_sim_string_free`.
 *
 * # Safety
 * `trace_text` must be a valid NUL-terminated UTF-8 string; `out_json`
 * must be a valid pointer.
 */
enum MpkStatus mpk_sim_replay(const char *trace_text,
                              enum MpkReplayMode mode,
                              double evict_rate,
                              uint64_t seed,
                              char **out_json);

/**
 * Release a string returned by `mpk_sim_replay`.
 *
 * # Safety
 * `s` must be null or a pointer obtained from `mpk_sim_replay`.
 */
void mpk_sim_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MPK_SIM_H */
