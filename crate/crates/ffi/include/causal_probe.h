#ifndef CAUSAL_PROBE_H
#define CAUSAL_PROBE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/*
 Result codes. Values 2 to 5 match the command-line exit codes.
 */
typedef enum CpStatus {
  CP_STATUS_OK = 0,
  CP_STATUS_PARSE_ERROR = 2,
  CP_STATUS_QUERY_ERROR = 3,
  CP_STATUS_VALIDATION_ERROR = 4,
  CP_STATUS_IO_ERROR = 5,
  CP_STATUS_NULL_ARGUMENT = 6,
  CP_STATUS_INVALID_UTF8 = 7,
  CP_STATUS_PANIC = 8,
} CpStatus;

/*
 Parsed causal graph.
 */
typedef struct CpGraph CpGraph;

/*
 Validated prediction grid.
 */
typedef struct CpGrid CpGrid;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. Valid until the
 next failing call on the same thread.
 */
const char *cp_last_error(void);

/*
 Library version as a static string.
 */
const char *cp_version(void);

/*
 # Safety
 `s` is null or a string returned by this library and not yet freed.
 */
void cp_string_free(char *s);

/*
 Parses a graph from text.

 # Safety
 `source` is a NUL-terminated string; `out` is writable.
 */
enum CpStatus cp_graph_parse(const char *source, struct CpGraph **out);

/*
 The built-in 11-node probing graph.

 # Safety
 `out` is writable.
 */
enum CpStatus cp_graph_reference(struct CpGraph **out);

/*
 # Safety
 `g` is null or a handle from this library not yet freed.
 */
void cp_graph_free(struct CpGraph *g);

/*
 Backdoor paths from `treatment` to `outcome`, one per line, open ones
 (under the comma-separated `adjust` set, which may be null) first. Each
 line is `open <path>` or `blocked <path>` with `<-`/`->` arrows.

 # Safety
 String arguments are NUL-terminated; `out` is writable.
 */
enum CpStatus cp_graph_backdoor_paths(const struct CpGraph *g,
                                      const char *treatment,
                                      const char *outcome,
                                      const char *adjust,
                                      char **out);

/*
 Checks `adjust` (comma-separated, null for the empty set) against the
 backdoor criterion. Violations are written one per line to `report`.

 # Safety
 String arguments are NUL-terminated; `valid` and `report` are writable.
 */
enum CpStatus cp_graph_criterion(const struct CpGraph *g,
                                 const char *treatment,
                                 const char *outcome,
                                 const char *adjust,
                                 bool *valid,
                                 char **report);

/*
 Minimal adjustment sets, one per line as comma-separated ids; the empty
 set is an empty line. `max_size` 0 means unbounded.

 # Safety
 String arguments are NUL-terminated; `out` is writable.
 */
enum CpStatus cp_graph_adjustment_sets(const struct CpGraph *g,
                                       const char *treatment,
                                       const char *outcome,
                                       size_t max_size,
                                       char **out);

/*
 Loads and validates a grid file against a catalog file.

 # Safety
 Paths are NUL-terminated; `out` is writable.
 */
enum CpStatus cp_grid_load(const char *grid_path, const char *catalog_path, struct CpGrid **out);

/*
 Parses a grid from text against catalog text.

 # Safety
 Texts are NUL-terminated; `out` is writable.
 */
enum CpStatus cp_grid_parse(const char *grid_text, const char *catalog_text, struct CpGrid **out);

/*
 # Safety
 `g` is null or a handle from this library not yet freed.
 */
void cp_grid_free(struct CpGrid *g);

/*
 Number of models, or 0 for a null handle.

 # Safety
 `g` is null or a live handle.
 */
size_t cp_grid_model_count(const struct CpGrid *g);

/*
 Number of relations, or 0 for a null handle.

 # Safety
 `g` is null or a live handle.
 */
size_t cp_grid_relation_count(const struct CpGrid *g);

/*
 P@1 of one prompt with default names.

 # Safety
 String arguments are NUL-terminated; `out` is writable.
 */
enum CpStatus cp_precision_at_1(const struct CpGrid *g,
                                const char *model,
                                const char *relation,
                                const char *prompt,
                                double *out);

/*
 Backdoor-adjusted score with uniform weights. `k_p`/`k_x` of 0 mean all.

 # Safety
 String arguments are NUL-terminated; `out` is writable.
 */
enum CpStatus cp_adjusted_score(const struct CpGrid *g,
                                const char *model,
                                const char *relation,
                                size_t k_p,
                                size_t k_x,
                                uint64_t seed,
                                double *out);

/*
 Score table CSV (`mode,model_id,relation_id,score`) for one mode over all
 relations. `mode` is `original`, `random` or `intervention`.

 # Safety
 `mode` is NUL-terminated; `out` is writable.
 */
enum CpStatus cp_evaluate_mode(const struct CpGrid *g,
                               const char *mode,
                               size_t k_p,
                               size_t k_x,
                               uint64_t seed,
                               char **out);

/*
 Rank-consistency experiment; writes the consistency CSV
 (`row,mode,consistency,modal`). `modes` is comma-separated, null for all.

 # Safety
 `modes` is null or NUL-terminated; `out` is writable.
 */
enum CpStatus cp_rank_consistency(const struct CpGrid *g,
                                  size_t runtimes,
                                  size_t subset_size,
                                  const char *modes,
                                  uint64_t seed,
                                  char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAUSAL_PROBE_H */
