//! C ABI over the proofbeam engine.
//!
//! Every entry point returns a [`PbStatus`]; on failure the message is
//! available from [`pb_last_error_message`] on the same thread. Handles are
//! opaque and must be released with their matching `*_free` function.
//! Strings handed out by the library are released with [`pb_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use proofbeam::fingerprint::Fingerprint;
use proofbeam::planner::PlannerConfig;
use proofbeam::proposer::{finish_temperature, step_temperature, OracleProposer};
use proofbeam::service::Engine;
use proofbeam::stepwise::SearchConfig;
use proofbeam::verifier::{generate_space, MockBackend, SyntheticSpace};
use serde::Deserialize;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Parse = 4,
    Internal = 5,
    Panic = 6,
}

/// A proof-state space for the built-in mock verifier.
pub struct PbSpace {
    space: SyntheticSpace,
}

/// A configured engine: mock verifier plus oracle proposer.
pub struct PbProver {
    engine: Engine,
    search: SearchConfig,
    planner: PlannerConfig,
}

/// Outcome of a prove or plan call.
pub struct PbResult {
    solved: bool,
    script: CString,
    holes: usize,
    elapsed: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(PbStatus, String);

fn fail(status: PbStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PbStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(format!("panic: {msg}"));
            PbStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(PbStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(PbStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(PbStatus::NullPointer, format!("{what} is null")))
}

fn check_out<T>(out: *mut T) -> Result<(), Failure> {
    if out.is_null() {
        Err(fail(PbStatus::NullPointer, "output pointer is null"))
    } else {
        Ok(())
    }
}

fn to_c(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s).map(CString::into_raw).map_err(|_| fail(PbStatus::Internal, "string contains NUL"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library on this thread.
#[no_mangle]
pub extern "C" fn pb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn pb_step_temperature(s: u32) -> f64 {
    step_temperature(s)
}

#[no_mangle]
pub extern "C" fn pb_finish_temperature(s: u32) -> f64 {
    finish_temperature(s)
}

/// Full 40-character SHA-1 fingerprint of `text`.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_fingerprint(text: *const c_char, out: *mut *mut c_char) -> PbStatus {
    guard(|| {
        check_out(out)?;
        let t = read_str(text, "text")?;
        *out = to_c(Fingerprint::of(t).into_string())?;
        Ok(())
    })
}

/// Release a string returned by the library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn pb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Random space with a chain of `depth` steps and `branching` commands per node.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_space_generate(
    depth: usize,
    branching: usize,
    solutions: usize,
    seed: u64,
    out: *mut *mut PbSpace,
) -> PbStatus {
    guard(|| {
        check_out(out)?;
        if depth == 0 || branching == 0 || solutions == 0 {
            return Err(fail(PbStatus::InvalidArgument, "depth, branching and solutions must be positive"));
        }
        let space = generate_space(depth, branching, solutions, seed);
        *out = Box::into_raw(Box::new(PbSpace { space }));
        Ok(())
    })
}

/// Parse a space fixture.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_space_from_json(json: *const c_char, out: *mut *mut PbSpace) -> PbStatus {
    guard(|| {
        check_out(out)?;
        let text = read_str(json, "json")?;
        let space = SyntheticSpace::from_json(text).map_err(|e| fail(PbStatus::Parse, e.to_string()))?;
        *out = Box::into_raw(Box::new(PbSpace { space }));
        Ok(())
    })
}

/// # Safety
/// `space` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_space_to_json(space: *const PbSpace, out: *mut *mut c_char) -> PbStatus {
    guard(|| {
        check_out(out)?;
        let s = deref(space, "space")?;
        *out = to_c(s.space.to_json())?;
        Ok(())
    })
}

/// # Safety
/// `space` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_space_root_goal(space: *const PbSpace, out: *mut *mut c_char) -> PbStatus {
    guard(|| {
        check_out(out)?;
        let s = deref(space, "space")?;
        *out = to_c(s.space.root_goal())?;
        Ok(())
    })
}

/// # Safety
/// `space` must come from this library and not have been freed. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn pb_space_free(space: *mut PbSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct ProverConfig {
    search: SearchConfig,
    planner: PlannerConfig,
    oracle_noise: usize,
    seed: u64,
}

/// Engine over a copy of `space`. `config_json` may be NULL or an object
/// with optional keys `search`, `planner`, `oracle_noise` and `seed`.
///
/// # Safety
/// `space` must be a live handle; `config_json` NULL or NUL-terminated;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_prover_new(
    space: *const PbSpace,
    config_json: *const c_char,
    out: *mut *mut PbProver,
) -> PbStatus {
    guard(|| {
        check_out(out)?;
        let s = deref(space, "space")?;
        let cfg: ProverConfig = if config_json.is_null() {
            ProverConfig::default()
        } else {
            serde_json::from_str(read_str(config_json, "config_json")?)
                .map_err(|e| fail(PbStatus::Parse, e.to_string()))?
        };
        cfg.search.validate().map_err(|e| fail(PbStatus::InvalidArgument, e.to_string()))?;
        cfg.planner.validate().map_err(|e| fail(PbStatus::InvalidArgument, e.to_string()))?;
        let backend = MockBackend::new(s.space.clone()).map_err(|e| fail(PbStatus::InvalidArgument, e.to_string()))?;
        let proposer = OracleProposer::new(s.space.clone(), cfg.oracle_noise, cfg.seed);
        let engine = Engine::new(Arc::new(backend), "oracle", Arc::new(proposer))
            .with_search(cfg.search.clone())
            .with_planner(cfg.planner.clone());
        *out = Box::into_raw(Box::new(PbProver { engine, search: cfg.search, planner: cfg.planner }));
        Ok(())
    })
}

/// Beam search on `goal`. An unsolved goal is still `PB_STATUS_OK`; check
/// [`pb_result_solved`].
///
/// # Safety
/// `prover` must be a live handle; `goal` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_prover_prove(
    prover: *const PbProver,
    goal: *const c_char,
    out: *mut *mut PbResult,
) -> PbStatus {
    guard(|| {
        check_out(out)?;
        let p = deref(prover, "prover")?;
        let goal = read_str(goal, "goal")?;
        let r = p.engine.run_prove(goal, &p.search, None).map_err(|e| fail(PbStatus::InvalidArgument, e.to_string()))?;
        let script = CString::new(r.script.render()).map_err(|_| fail(PbStatus::Internal, "script contains NUL"))?;
        *out = Box::into_raw(Box::new(PbResult { solved: r.solved, script, holes: 0, elapsed: r.elapsed.as_secs_f64() }));
        Ok(())
    })
}

/// Outline planning and repair on `goal`, using the planner mode from the
/// prover configuration.
///
/// # Safety
/// `prover` must be a live handle; `goal` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_prover_plan(
    prover: *const PbProver,
    goal: *const c_char,
    out: *mut *mut PbResult,
) -> PbStatus {
    guard(|| {
        check_out(out)?;
        let p = deref(prover, "prover")?;
        let goal = read_str(goal, "goal")?;
        let job = p.engine.run_plan(goal, &p.planner, None).map_err(|e| fail(PbStatus::InvalidArgument, e.to_string()))?;
        let holes = proofbeam::script_model::find_holes(&job.script).len();
        let solved = job.result.as_ref().is_some_and(|r| r.solved);
        let script = CString::new(job.script.render()).map_err(|_| fail(PbStatus::Internal, "script contains NUL"))?;
        *out = Box::into_raw(Box::new(PbResult { solved, script, holes, elapsed: job.elapsed.as_secs_f64() }));
        Ok(())
    })
}

/// # Safety
/// `prover` must come from this library and not have been freed. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn pb_prover_free(prover: *mut PbProver) {
    if !prover.is_null() {
        drop(Box::from_raw(prover));
    }
}

/// # Safety
/// `result` must be a live handle or NULL (reads as false).
#[no_mangle]
pub unsafe extern "C" fn pb_result_solved(result: *const PbResult) -> bool {
    result.as_ref().is_some_and(|r| r.solved)
}

/// Number of `sorry` holes left in the script.
///
/// # Safety
/// `result` must be a live handle or NULL (reads as 0).
#[no_mangle]
pub unsafe extern "C" fn pb_result_holes(result: *const PbResult) -> usize {
    result.as_ref().map_or(0, |r| r.holes)
}

/// Wall-clock seconds spent.
///
/// # Safety
/// `result` must be a live handle or NULL (reads as 0).
#[no_mangle]
pub unsafe extern "C" fn pb_result_elapsed(result: *const PbResult) -> f64 {
    result.as_ref().map_or(0.0, |r| r.elapsed)
}

/// Borrowed script text, valid until the result is freed.
///
/// # Safety
/// `result` must be a live handle or NULL (reads as NULL).
#[no_mangle]
pub unsafe extern "C" fn pb_result_script(result: *const PbResult) -> *const c_char {
    result.as_ref().map_or(ptr::null(), |r| r.script.as_ptr())
}

/// # Safety
/// `result` must come from this library and not have been freed. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn pb_result_free(result: *mut PbResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}
