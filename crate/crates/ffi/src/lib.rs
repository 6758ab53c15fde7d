//! C ABI over the `trustroute` crate.
//!
//! Every function returns a [`TrStatus`] and writes results through out
//! pointers. On failure the message is kept per thread and can be read with
//! [`tr_last_error`]. Strings handed out by the library must be released with
//! [`tr_string_free`], handles with their matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use trustroute::harness::RunConfig;
use trustroute::persistence::{load_snapshot, save_snapshot, TrustSnapshot};
use trustroute::trust::{compute_reward, ramp_factor};
use trustroute::query::QueryRecord;
use trustroute::{Error, HyperParams, Orchestrator, QueryItem, SharedTrustStore, TrustStore};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrStatus {
    Ok = 0,
    /// A required pointer argument was null.
    Null = 1,
    /// Bad UTF-8, out-of-domain numbers or a broken precondition.
    InvalidArg = 2,
    Config = 3,
    Io = 4,
    /// Unparseable or incompatible snapshot, or a bad query record.
    Format = 5,
    /// Remote failures and anything else raised while running queries.
    Runtime = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

/// Mirror of the Rust `HyperParams`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TrHyperParams {
    pub kappa: f64,
    pub mu: f64,
    pub gamma: f64,
    pub lambda_f: f64,
    pub lambda_g: f64,
    pub ramp_t: f64,
    pub beta: f64,
    pub top_k: u32,
}

impl From<HyperParams> for TrHyperParams {
    fn from(p: HyperParams) -> Self {
        Self {
            kappa: p.kappa,
            mu: p.mu,
            gamma: p.gamma,
            lambda_f: p.lambda_f,
            lambda_g: p.lambda_g,
            ramp_t: p.ramp_t,
            beta: p.beta,
            top_k: p.top_k as u32,
        }
    }
}

impl From<TrHyperParams> for HyperParams {
    fn from(p: TrHyperParams) -> Self {
        Self {
            kappa: p.kappa,
            mu: p.mu,
            gamma: p.gamma,
            lambda_f: p.lambda_f,
            lambda_g: p.lambda_g,
            ramp_t: p.ramp_t,
            beta: p.beta,
            top_k: p.top_k as usize,
        }
    }
}

/// Opaque trust store plus the hyperparameters saved alongside it.
pub struct TrStore {
    store: SharedTrustStore,
    params: HyperParams,
}

/// Opaque orchestrator built from a TOML run configuration.
pub struct TrOrchestrator {
    inner: Orchestrator,
    parallelism: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', "?")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(TrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config(_) => TrStatus::Config,
            Error::Io { .. } => TrStatus::Io,
            Error::Malformed { .. } | Error::InvalidRecord { .. } | Error::IncompatibleVersion { .. } => {
                TrStatus::Format
            }
            Error::InputDomain(_) | Error::ContractViolation(_) => TrStatus::InvalidArg,
            _ => TrStatus::Runtime,
        };
        Failure(status, e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn guard(f: impl FnOnce() -> Outcome) -> TrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TrStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            TrStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(TrStatus::Null, format!("{name} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(TrStatus::InvalidArg, format!("{name}: {e}")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|e| Failure(TrStatus::Runtime, e.to_string()))
}

/// Queries as a JSON array of records, or a single record object.
fn parse_queries(text: &str) -> Result<Vec<QueryItem>, Failure> {
    let format = |e: String| Failure(TrStatus::Format, format!("queries: {e}"));
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| format(e.to_string()))?;
    let records: Vec<QueryRecord> = if value.is_array() {
        serde_json::from_value(value)
    } else {
        serde_json::from_value(value).map(|r| vec![r])
    }
    .map_err(|e| format(e.to_string()))?;
    records
        .into_iter()
        .map(|r| r.into_item().map_err(|e| format(e.to_string())))
        .collect()
}

/// Message of the last failure on the calling thread, or null.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must come from this library and not have been freed yet. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn tr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `out` must point to writable memory for one `TrHyperParams`.
#[no_mangle]
pub unsafe extern "C" fn tr_hyperparams_default(out: *mut TrHyperParams) -> TrStatus {
    guard(|| {
        *out_arg(out, "out")? = HyperParams::default().into();
        Ok(())
    })
}

/// Creates an empty store. `params` may be null for the defaults.
///
/// # Safety
/// `params` must be null or valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tr_store_new(params: *const TrHyperParams, out: *mut *mut TrStore) -> TrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let params = params.as_ref().map_or_else(HyperParams::default, |p| (*p).into());
        params.validate().map_err(Failure::from)?;
        *out = Box::into_raw(Box::new(TrStore {
            store: SharedTrustStore::new(TrustStore::new()),
            params,
        }));
        Ok(())
    })
}

/// # Safety
/// `store` must come from this library and not have been freed. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn tr_store_free(store: *mut TrStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Loads a JSON snapshot written by `tr_store_save` or the CLI.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tr_store_load(path: *const c_char, out: *mut *mut TrStore) -> TrStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let (store, params) = load_snapshot(path)?;
        *out = Box::into_raw(Box::new(TrStore {
            store: SharedTrustStore::new(store),
            params,
        }));
        Ok(())
    })
}

/// Writes the store atomically as a JSON snapshot.
///
/// # Safety
/// `store` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tr_store_save(store: *const TrStore, path: *const c_char) -> TrStatus {
    guard(|| {
        let store = ref_arg(store, "store")?;
        let path = str_arg(path, "path")?;
        save_snapshot(&store.store.read(), &store.params, path)?;
        Ok(())
    })
}

/// Snapshot JSON as a newly allocated string.
///
/// # Safety
/// `store` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tr_store_to_json(store: *const TrStore, out: *mut *mut c_char) -> TrStatus {
    guard(|| {
        let store = ref_arg(store, "store")?;
        let out = out_arg(out, "out")?;
        let json = TrustSnapshot::from_store(&store.store.read(), &store.params).to_json();
        *out = into_c_string(json)?;
        Ok(())
    })
}

/// Score of one (agent, role, category) cell; unseen cells read as 0.5.
///
/// # Safety
/// Strings must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tr_store_score(
    store: *const TrStore,
    agent: *const c_char,
    role: *const c_char,
    category: *const c_char,
    out: *mut f64,
) -> TrStatus {
    guard(|| {
        let store = ref_arg(store, "store")?;
        let (agent, role, category) = (str_arg(agent, "agent")?, str_arg(role, "role")?, str_arg(category, "category")?);
        let out = out_arg(out, "out")?;
        *out = store.store.read().score(&agent.into(), &role.into(), &category.into());
        Ok(())
    })
}

/// Global step counter.
///
/// # Safety
/// `store` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tr_store_step(store: *const TrStore, out: *mut u64) -> TrStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(store, "store")?.store.read().step();
        Ok(())
    })
}

/// Number of materialized cells.
///
/// # Safety
/// `store` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tr_store_len(store: *const TrStore, out: *mut usize) -> TrStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(store, "store")?.store.read().len();
        Ok(())
    })
}

/// Hyperparameters recorded with the store.
///
/// # Safety
/// `store` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tr_store_hyperparams(store: *const TrStore, out: *mut TrHyperParams) -> TrStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(store, "store")?.params.into();
        Ok(())
    })
}

/// Builds an orchestrator from TOML text in the CLI config format.
///
/// Relative paths inside the config are taken relative to the working
/// directory.
///
/// # Safety
/// `toml` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tr_orchestrator_new_from_config(
    toml: *const c_char,
    out: *mut *mut TrOrchestrator,
) -> TrStatus {
    guard(|| {
        let text = str_arg(toml, "toml")?;
        let out = out_arg(out, "out")?;
        let cfg = RunConfig::from_toml(text)?;
        cfg.validate()?;
        let inner = cfg.orchestrator()?;
        *out = Box::into_raw(Box::new(TrOrchestrator {
            inner,
            parallelism: cfg.parallelism,
        }));
        Ok(())
    })
}

/// # Safety
/// `orch` must come from this library and not have been freed. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn tr_orchestrator_free(orch: *mut TrOrchestrator) {
    if !orch.is_null() {
        drop(Box::from_raw(orch));
    }
}

/// Runs queries in order and updates `store`. Every query needs ground truth.
///
/// `queries_json` is a JSON array of query records or a single record. On
/// success `out_json` receives a JSON array of step results. The store then
/// records the orchestrator's hyperparameters.
///
/// # Safety
/// Handles must be live, `queries_json` NUL-terminated, `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn tr_orchestrator_optimize(
    orch: *const TrOrchestrator,
    store: *mut TrStore,
    queries_json: *const c_char,
    out_json: *mut *mut c_char,
) -> TrStatus {
    guard(|| {
        let orch = ref_arg(orch, "orch")?;
        let store = out_arg(store, "store")?;
        let queries = parse_queries(str_arg(queries_json, "queries_json")?)?;
        let out = out_arg(out_json, "out_json")?;
        if let Some(q) = queries.iter().find(|q| q.ground_truth.is_none()) {
            return Err(Failure(TrStatus::Format, format!("query {} has no ground truth", q.query_id)));
        }
        let steps = orch.inner.optimize(&queries, &store.store)?;
        store.params = orch.inner.params;
        *out = into_c_string(serde_json::to_string(&steps).map_err(|e| Failure(TrStatus::Runtime, e.to_string()))?)?;
        Ok(())
    })
}

/// Answers queries without touching trust. Results keep input order.
///
/// # Safety
/// Handles must be live, `queries_json` NUL-terminated, `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn tr_orchestrator_evaluate(
    orch: *const TrOrchestrator,
    store: *const TrStore,
    queries_json: *const c_char,
    out_json: *mut *mut c_char,
) -> TrStatus {
    guard(|| {
        let orch = ref_arg(orch, "orch")?;
        let store = ref_arg(store, "store")?;
        let queries = parse_queries(str_arg(queries_json, "queries_json")?)?;
        let out = out_arg(out_json, "out_json")?;
        let steps = orch.inner.evaluate(&queries, &store.store, orch.parallelism)?;
        *out = into_c_string(serde_json::to_string(&steps).map_err(|e| Failure(TrStatus::Runtime, e.to_string()))?)?;
        Ok(())
    })
}

/// Unclamped reward for one specialist.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tr_compute_reward(
    sim_agent: f64,
    sim_final: f64,
    agreement: bool,
    kappa: f64,
    out: *mut f64,
) -> TrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = compute_reward(sim_agent, sim_final, agreement, kappa)?;
        Ok(())
    })
}

/// `1 - exp(-count / ramp_t)`. NaN when `ramp_t` is not positive.
#[no_mangle]
pub extern "C" fn tr_ramp_factor(count: u64, ramp_t: f64) -> f64 {
    if ramp_t > 0.0 {
        ramp_factor(count, ramp_t)
    } else {
        f64::NAN
    }
}
