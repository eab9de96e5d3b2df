#ifndef SITNET_H
#define SITNET_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  SITNET_STATUS_OK = 0,
  SITNET_STATUS_NULL_ARGUMENT = 1,
  SITNET_STATUS_INVALID_UTF8 = 2,
  SITNET_STATUS_PARSE_ERROR = 3,
  SITNET_STATUS_SYNTHESIS_UNSUPPORTED = 4,
  SITNET_STATUS_INVALID_TRACE = 5,
  SITNET_STATUS_NO_PLAN = 6,
  SITNET_STATUS_UNREPAIRABLE = 7,
  SITNET_STATUS_INVALID_CHOICE = 8,
  SITNET_STATUS_NOT_AWAITING = 9,
  SITNET_STATUS_UNSUPPORTED_NET = 10,
  SITNET_STATUS_PANIC = 11,
} SitnetStatus;

typedef enum {
  SITNET_FORMAT_CLAUSAL = 0,
  SITNET_FORMAT_EDGES = 1,
  SITNET_FORMAT_DOT = 2,
  SITNET_FORMAT_JSON = 3,
  SITNET_FORMAT_FORKS = 4,
} SitnetFormat;

typedef enum {
  SITNET_SESSION_STATE_RUNNING = 0,
  SITNET_SESSION_STATE_AWAITING_CHOICE = 1,
  SITNET_SESSION_STATE_COMPLETED = 2,
  SITNET_SESSION_STATE_STUCK = 3,
  SITNET_SESSION_STATE_BUDGET_EXCEEDED = 4,
  SITNET_SESSION_STATE_UNSAFE = 5,
} SitnetSessionState;

/**
 * A synthesized Petri net.
 */
typedef struct SitnetNet SitnetNet;

/**
 * An interactive traversal of a net.
 */
typedef struct SitnetSession SitnetSession;

/**
 * A parsed domain specification.
 */
typedef struct SitnetSpec SitnetSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the next call.
 */
const char *sitnet_last_error(void);

/**
 * # Safety
 * `s` is null or was returned by this library and not yet freed.
 */
void sitnet_string_free(char *s);

/**
 * # Safety
 * `text` is a NUL-terminated string; `out` is valid for writes.
 */
SitnetStatus sitnet_spec_parse(const char *text, SitnetSpec **out);

/**
 * # Safety
 * `spec` is null or came from [`sitnet_spec_parse`] and was not freed.
 */
void sitnet_spec_free(SitnetSpec *spec);

/**
 * # Safety
 * `spec` is a live spec handle; `out` is valid for writes.
 */
SitnetStatus sitnet_net_synthesize(const SitnetSpec *spec, SitnetNet **out);

/**
 * # Safety
 * `net` is null or came from [`sitnet_net_synthesize`] and was not freed.
 */
void sitnet_net_free(SitnetNet *net);

/**
 * # Safety
 * `net` is a live net handle; `out` is valid for writes.
 */
SitnetStatus sitnet_net_render(const SitnetNet *net, SitnetFormat format, char **out);

/**
 * `Ok` for a valid trace, `InvalidTrace` otherwise, with the 1-based failing position in `position`.
 *
 * # Safety
 * `net` is a live net handle; `trace` is a NUL-terminated string; `position` is null or valid for writes.
 */
SitnetStatus sitnet_check_trace(const SitnetNet *net,
                                const char *trace,
                                size_t *position);

/**
 * Up to `max_plans` plans for `goal`, one per line.
 *
 * # Safety
 * `spec` is a live spec handle; `goal` is a NUL-terminated string; `out` is valid for writes.
 */
SitnetStatus sitnet_plan(const SitnetSpec *spec,
                         const char *goal,
                         size_t max_depth,
                         size_t max_plans,
                         char **out);

/**
 * Repair transcript for `plan`.
 *
 * # Safety
 * `spec` is a live spec handle; `plan` is a NUL-terminated string; `out` is valid for writes.
 */
SitnetStatus sitnet_check_fix(const SitnetSpec *spec,
                              const char *plan_text,
                              size_t max_rounds,
                              char **out);

/**
 * Starts a traversal and fires every forced step.
 *
 * # Safety
 * `net` is a live net handle; `out` is valid for writes.
 */
SitnetStatus sitnet_session_start(const SitnetNet *net, size_t max_firings, SitnetSession **out);

/**
 * # Safety
 * `session` is null or came from [`sitnet_session_start`] and was not freed.
 */
void sitnet_session_free(SitnetSession *session);

/**
 * # Safety
 * `session` is a live session handle.
 */
SitnetStatus sitnet_session_choose(SitnetSession *session, char label);

/**
 * # Safety
 * `session` is a live session handle; `state` is valid for writes.
 */
SitnetStatus sitnet_session_state(const SitnetSession *session, SitnetSessionState *state);

/**
 * Labels fired so far, e.g. `acde`.
 *
 * # Safety
 * `session` is a live session handle; `out` is valid for writes.
 */
SitnetStatus sitnet_session_history(const SitnetSession *session, char **out);

/**
 * Current choice options as a label string, empty unless awaiting a choice.
 *
 * # Safety
 * `session` is a live session handle; `out` is valid for writes.
 */
SitnetStatus sitnet_session_options(const SitnetSession *session, char **out);

/**
 * Plan text of the history, `start=>sig=>...`.
 *
 * # Safety
 * `session` is a live session handle; `out` is valid for writes.
 */
SitnetStatus sitnet_session_plan(const SitnetSession *session, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SITNET_H */
