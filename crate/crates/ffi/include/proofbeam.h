#ifndef PROOFBEAM_H
#define PROOFBEAM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum PbStatus {
  PB_STATUS_OK = 0,
  PB_STATUS_NULL_POINTER = 1,
  PB_STATUS_INVALID_UTF8 = 2,
  PB_STATUS_INVALID_ARGUMENT = 3,
  PB_STATUS_PARSE = 4,
  PB_STATUS_INTERNAL = 5,
  PB_STATUS_PANIC = 6,
} PbStatus;

/*
 A configured engine: mock verifier plus oracle proposer.
 */
typedef struct PbProver PbProver;

/*
 Outcome of a prove or plan call.
 */
typedef struct PbResult PbResult;

/*
 A proof-state space for the built-in mock verifier.
 */
typedef struct PbSpace PbSpace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *pb_version(void);

/*
 Message of the last failed call on this thread, or NULL. Valid until the
 next call into the library on this thread.
 */
const char *pb_last_error_message(void);

double pb_step_temperature(uint32_t s);

double pb_finish_temperature(uint32_t s);

/*
 Full 40-character SHA-1 fingerprint of `text`.

 # Safety
 `text` must be a NUL-terminated string; `out` must be writable.
 */
enum PbStatus pb_fingerprint(const char *text, char **out);

/*
 Release a string returned by the library. NULL is ignored.

 # Safety
 `s` must come from this library and not have been freed.
 */
void pb_string_free(char *s);

/*
 Random space with a chain of `depth` steps and `branching` commands per node.

 # Safety
 `out` must be writable.
 */
enum PbStatus pb_space_generate(uintptr_t depth,
                                uintptr_t branching,
                                uintptr_t solutions,
                                uint64_t seed,
                                struct PbSpace **out);

/*
 Parse a space fixture.

 # Safety
 `json` must be a NUL-terminated string; `out` must be writable.
 */
enum PbStatus pb_space_from_json(const char *json, struct PbSpace **out);

/*
 # Safety
 `space` must be a live handle; `out` must be writable.
 */
enum PbStatus pb_space_to_json(const struct PbSpace *space, char **out);

/*
 # Safety
 `space` must be a live handle; `out` must be writable.
 */
enum PbStatus pb_space_root_goal(const struct PbSpace *space, char **out);

/*
 # Safety
 `space` must come from this library and not have been freed. NULL is ignored.
 */
void pb_space_free(struct PbSpace *space);

/*
 Engine over a copy of `space`. `config_json` may be NULL or an object
 with optional keys `search`, `planner`, `oracle_noise` and `seed`.

 # Safety
 `space` must be a live handle; `config_json` NULL or NUL-terminated;
 `out` must be writable.
 */
enum PbStatus pb_prover_new(const struct PbSpace *space,
                            const char *config_json,
                            struct PbProver **out);

/*
 Beam search on `goal`. An unsolved goal is still `PB_STATUS_OK`; check
 [`pb_result_solved`].

 # Safety
 `prover` must be a live handle; `goal` NUL-terminated; `out` writable.
 */
enum PbStatus pb_prover_prove(const struct PbProver *prover,
                              const char *goal,
                              struct PbResult **out);

/*
 Outline planning and repair on `goal`, using the planner mode from the
 prover configuration.

 # Safety
 `prover` must be a live handle; `goal` NUL-terminated; `out` writable.
 */
enum PbStatus pb_prover_plan(const struct PbProver *prover,
                             const char *goal,
                             struct PbResult **out);

/*
 # Safety
 `prover` must come from this library and not have been freed. NULL is ignored.
 */
void pb_prover_free(struct PbProver *prover);

/*
 # Safety
 `result` must be a live handle or NULL (reads as false).
 */
bool pb_result_solved(const struct PbResult *result);

/*
 Number of `sorry` holes left in the script.

 # Safety
 `result` must be a live handle or NULL (reads as 0).
 */
uintptr_t pb_result_holes(const struct PbResult *result);

/*
 Wall-clock seconds spent.

 # Safety
 `result` must be a live handle or NULL (reads as 0).
 */
double pb_result_elapsed(const struct PbResult *result);

/*
 Borrowed script text, valid until the result is freed.

 # Safety
 `result` must be a live handle or NULL (reads as NULL).
 */
const char *pb_result_script(const struct PbResult *result);

/*
 # Safety
 `result` must come from this library and not have been freed. NULL is ignored.
 */
void pb_result_free(struct PbResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PROOFBEAM_H */
