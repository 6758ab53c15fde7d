#ifndef TRUSTROUTE_H
#define TRUSTROUTE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum TrStatus {
  TR_STATUS_OK = 0,
  // A required pointer argument was null.
  TR_STATUS_NULL = 1,
  // Bad UTF-8, out-of-domain numbers or a broken precondition.
  TR_STATUS_INVALID_ARG = 2,
  TR_STATUS_CONFIG = 3,
  TR_STATUS_IO = 4,
  // Unparseable or incompatible snapshot, or a bad query record.
  TR_STATUS_FORMAT = 5,
  // Remote failures and anything else raised while running queries.
  TR_STATUS_RUNTIME = 6,
  // A Rust panic was caught at the boundary.
  TR_STATUS_PANIC = 7,
} TrStatus;

// Opaque orchestrator built from a TOML run configuration.
typedef struct TrOrchestrator TrOrchestrator;

// Opaque trust store plus the hyperparameters saved alongside it.
typedef struct TrStore TrStore;

// Mirror of the Rust `HyperParams`.
typedef struct TrHyperParams {
  double kappa;
  double mu;
  double gamma;
  double lambda_f;
  double lambda_g;
  double ramp_t;
  double beta;
  uint32_t top_k;
} TrHyperParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on the calling thread, or null.
//
// The pointer stays valid until the next failing call on the same thread.
const char *tr_last_error(void);

// # Safety
// `s` must come from this library and not have been freed yet. Null is a no-op.
void tr_string_free(char *s);

// # Safety
// `out` must point to writable memory for one `TrHyperParams`.
enum TrStatus tr_hyperparams_default(struct TrHyperParams *out);

// Creates an empty store. `params` may be null for the defaults.
//
// # Safety
// `params` must be null or valid; `out` must be writable.
enum TrStatus tr_store_new(const struct TrHyperParams *params, struct TrStore **out);

// # Safety
// `store` must come from this library and not have been freed. Null is a no-op.
void tr_store_free(struct TrStore *store);

// Loads a JSON snapshot written by `tr_store_save` or the CLI.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum TrStatus tr_store_load(const char *path, struct TrStore **out);

// Writes the store atomically as a JSON snapshot.
//
// # Safety
// `store` must be a live handle and `path` a NUL-terminated string.
enum TrStatus tr_store_save(const struct TrStore *store, const char *path);

// Snapshot JSON as a newly allocated string.
//
// # Safety
// `store` must be a live handle; `out` must be writable.
enum TrStatus tr_store_to_json(const struct TrStore *store, char **out);

// Score of one (agent, role, category) cell; unseen cells read as 0.5.
//
// # Safety
// Strings must be NUL-terminated; `out` must be writable.
enum TrStatus tr_store_score(const struct TrStore *store,
                             const char *agent,
                             const char *role,
                             const char *category,
                             double *out);

// Global step counter.
//
// # Safety
// `store` must be a live handle; `out` must be writable.
enum TrStatus tr_store_step(const struct TrStore *store, uint64_t *out);

// Number of materialized cells.
//
// # Safety
// `store` must be a live handle; `out` must be writable.
enum TrStatus tr_store_len(const struct TrStore *store, uintptr_t *out);

// Hyperparameters recorded with the store.
//
// # Safety
// `store` must be a live handle; `out` must be writable.
enum TrStatus tr_store_hyperparams(const struct TrStore *store, struct TrHyperParams *out);

// Builds an orchestrator from TOML text in the CLI config format.
//
// Relative paths inside the config are taken relative to the working
// directory.
//
// # Safety
// `toml` must be NUL-terminated; `out` must be writable.
enum TrStatus tr_orchestrator_new_from_config(const char *toml, struct TrOrchestrator **out);

// # Safety
// `orch` must come from this library and not have been freed. Null is a no-op.
void tr_orchestrator_free(struct TrOrchestrator *orch);

// Runs queries in order and updates `store`. Every query needs ground truth.
//
// `queries_json` is a JSON array of query records or a single record. On
// success `out_json` receives a JSON array of step results. The store then
// records the orchestrator's hyperparameters.
//
// # Safety
// Handles must be live, `queries_json` NUL-terminated, `out_json` writable.
enum TrStatus tr_orchestrator_optimize(const struct TrOrchestrator *orch,
                                       struct TrStore *store,
                                       const char *queries_json,
                                       char **out_json);

// Answers queries without touching trust. Results keep input order.
//
// # Safety
// Handles must be live, `queries_json` NUL-terminated, `out_json` writable.
enum TrStatus tr_orchestrator_evaluate(const struct TrOrchestrator *orch,
                                       const struct TrStore *store,
                                       const char *queries_json,
                                       char **out_json);

// Unclamped reward for one specialist.
//
// # Safety
// `out` must be writable.
enum TrStatus tr_compute_reward(double sim_agent,
                                double sim_final,
                                bool agreement,
                                double kappa,
                                double *out);

// `1 - exp(-count / ramp_t)`. NaN when `ramp_t` is not positive.
double tr_ramp_factor(uint64_t count, double ramp_t);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRUSTROUTE_H */
