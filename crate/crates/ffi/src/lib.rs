//! C ABI over the fogbench episode runner and campaign driver.
//!
//! Objects cross the boundary as opaque handles created by `fb_*_new` or
//! `fb_*_from_json` and released by the matching `fb_*_free`. Every fallible
//! call returns an `FbStatus`; on failure the message is kept per thread and
//! read back with `fb_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fogbench::campaign::{exit_code, run_campaign, CampaignConfig};
use fogbench::worldsim::{run_direct, Outcome, RunStats, ScenarioConfig, SimConfig};
use fogbench::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FbStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Config = 4,
    Protocol = 5,
    Scenario = 6,
    Exhausted = 7,
    Io = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FbOutcome {
    Reached = 0,
    Collided = 1,
    Stuck = 2,
    RouteViolation = 3,
    Timeout = 4,
}

impl From<Outcome> for FbOutcome {
    fn from(o: Outcome) -> Self {
        match o {
            Outcome::Reached => FbOutcome::Reached,
            Outcome::Collided => FbOutcome::Collided,
            Outcome::Stuck => FbOutcome::Stuck,
            Outcome::RouteViolation => FbOutcome::RouteViolation,
            Outcome::Timeout => FbOutcome::Timeout,
        }
    }
}

/// A validated scenario.
pub struct FbScenario(ScenarioConfig);

/// Counters and trace of one finished episode.
pub struct FbRunStats(RunStats);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FbStatus {
    match e {
        Error::Input(_) | Error::Json(_) => FbStatus::InvalidInput,
        Error::Config(_) => FbStatus::Config,
        Error::Protocol(_) => FbStatus::Protocol,
        Error::Scenario(_) => FbStatus::Scenario,
        Error::Exhausted(_) => FbStatus::Exhausted,
        Error::Io(_) => FbStatus::Io,
    }
}

fn fail(status: FbStatus, msg: impl Into<String>) -> FbStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, mapping errors and panics to a status and the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), FbStatus>) -> FbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FbStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(FbStatus::Panic, msg)
        }
    }
}

fn lift<T>(r: fogbench::Result<T>) -> Result<T, FbStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, FbStatus> {
    if p.is_null() {
        return Err(fail(FbStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(FbStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

fn null_check<T>(p: *const T, name: &str) -> Result<(), FbStatus> {
    if p.is_null() {
        Err(fail(FbStatus::NullArgument, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn fb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses and validates a scenario from JSON.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn fb_scenario_from_json(json: *const c_char, out: *mut *mut FbScenario) -> FbStatus {
    guard(|| {
        null_check(out, "out")?;
        let text = str_arg(json, "json")?;
        let s = lift(ScenarioConfig::from_json(text))?;
        lift(s.validate())?;
        *out = Box::into_raw(Box::new(FbScenario(s)));
        Ok(())
    })
}

/// Overrides the fog visibility (m) of a scenario. Infinity means clear air.
///
/// # Safety
/// `scenario` must come from `fb_scenario_from_json`.
#[no_mangle]
pub unsafe extern "C" fn fb_scenario_set_mor(scenario: *mut FbScenario, mor: f64) -> FbStatus {
    guard(|| {
        null_check(scenario, "scenario")?;
        if !(mor > 0.0) {
            return Err(fail(FbStatus::InvalidInput, format!("mor {mor} must be positive")));
        }
        (*scenario).0.weather.mor = mor;
        Ok(())
    })
}

/// # Safety
/// `scenario` must come from `fb_scenario_from_json` or be null.
#[no_mangle]
pub unsafe extern "C" fn fb_scenario_free(scenario: *mut FbScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs one closed-loop episode with direct calls.
///
/// `sim_json` is an optional simulator config; null selects the defaults.
///
/// # Safety
/// `scenario` must be a live handle, `sim_json` null or nul-terminated, and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fb_run_episode(
    scenario: *const FbScenario,
    sim_json: *const c_char,
    out: *mut *mut FbRunStats,
) -> FbStatus {
    guard(|| {
        null_check(scenario, "scenario")?;
        null_check(out, "out")?;
        let sim = if sim_json.is_null() {
            SimConfig::default()
        } else {
            let text = str_arg(sim_json, "sim_json")?;
            lift(serde_json::from_str(text).map_err(Error::from))?
        };
        let stats = lift(run_direct(&(*scenario).0, &sim))?;
        *out = Box::into_raw(Box::new(FbRunStats(stats)));
        Ok(())
    })
}

/// # Safety
/// `stats` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fb_stats_outcome(stats: *const FbRunStats) -> FbOutcome {
    (*stats).0.outcome.into()
}

/// # Safety
/// `stats` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fb_stats_frames(stats: *const FbRunStats) -> usize {
    (*stats).0.n_frame
}

/// Writes the false-positive, false-negative and fog-noise counts.
///
/// # Safety
/// `stats` must be a live handle; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn fb_stats_counts(stats: *const FbRunStats, n_fp: *mut usize, n_fn: *mut usize, n_fog: *mut usize) {
    let s = &(*stats).0;
    for (p, v) in [(n_fp, s.n_fp), (n_fn, s.n_fn), (n_fog, s.n_fog)] {
        if !p.is_null() {
            *p = v;
        }
    }
}

/// Smallest ego-to-NPC centre distance (m) over the episode.
///
/// # Safety
/// `stats` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fb_stats_d_min(stats: *const FbRunStats) -> f64 {
    (*stats).0.d_min
}

/// Serialises the stats, trace included, to JSON. Release with `fb_string_free`.
///
/// # Safety
/// `stats` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fb_stats_to_json(stats: *const FbRunStats, out: *mut *mut c_char) -> FbStatus {
    guard(|| {
        null_check(stats, "stats")?;
        null_check(out, "out")?;
        let text = lift(serde_json::to_string(&(*stats).0).map_err(Error::from))?;
        *out = CString::new(text).expect("json has no nul bytes").into_raw();
        Ok(())
    })
}

/// # Safety
/// `stats` must come from `fb_run_episode` or be null.
#[no_mangle]
pub unsafe extern "C" fn fb_stats_free(stats: *mut FbRunStats) {
    if !stats.is_null() {
        drop(Box::from_raw(stats));
    }
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn fb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Runs a campaign from its JSON config and writes its artifacts.
/// `exit_status` receives the command-line exit code (0, 1, 2 or 3), also
/// when the config is rejected.
///
/// # Safety
/// `config_json` must be nul-terminated; `exit_status` may be null.
#[no_mangle]
pub unsafe extern "C" fn fb_run_campaign(config_json: *const c_char, exit_status: *mut i32) -> FbStatus {
    guard(|| {
        let text = str_arg(config_json, "config_json")?;
        let result = CampaignConfig::from_json(text).and_then(|cfg| run_campaign(&cfg));
        if !exit_status.is_null() {
            *exit_status = exit_code(&result);
        }
        lift(result).map(|_| ())
    })
}
