//! C ABI for loading scenarios, solving for the reference equilibrium and
//! running the closed-loop simulation.
//!
//! Every entry point returns a [`CnStatus`]. On failure the message is kept
//! per thread and can be read with [`cn_last_error`]. Handles are opaque and
//! must be released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use coalition_nash::cli::scenario::Scenario;
use coalition_nash::game::OracleSolution;
use coalition_nash::sim::{self, RunOutcome};
use coalition_nash::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Io = 4,
    Config = 5,
    Dimension = 6,
    InvalidGraph = 7,
    NonConvergence = 8,
    Divergence = 9,
    Numerical = 10,
    BufferTooSmall = 11,
    Panic = 12,
    Other = 13,
}

/// A loaded scenario.
pub struct CnScenario {
    inner: Scenario,
}

/// A reference equilibrium.
pub struct CnSolution {
    inner: OracleSolution,
}

/// The result of one simulation run.
pub struct CnRun {
    inner: RunOutcome,
    dim: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> CnStatus {
    match err {
        Error::Parse { .. } => CnStatus::Parse,
        Error::Io { .. } => CnStatus::Io,
        Error::Config(_) => CnStatus::Config,
        Error::Dimension(_) => CnStatus::Dimension,
        Error::InvalidGraph(_) => CnStatus::InvalidGraph,
        Error::NonConvergence { .. } => CnStatus::NonConvergence,
        Error::Divergence { .. } => CnStatus::Divergence,
        Error::Numerical(_) => CnStatus::Numerical,
        _ => CnStatus::Other,
    }
}

struct Fail(CnStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CnStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            CnStatus::Panic
        }
    }
}

fn null() -> Fail {
    Fail(CnStatus::NullPointer, "null pointer argument".into())
}

unsafe fn as_str<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(CnStatus::InvalidUtf8, "string is not valid UTF-8".into()))
}

unsafe fn as_ref<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(null)
}

unsafe fn copy_out(values: &[f64], buf: *mut f64, len: usize) -> Result<(), Fail> {
    if buf.is_null() {
        return Err(null());
    }
    if len < values.len() {
        return Err(Fail(
            CnStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", values.len()),
        ));
    }
    std::ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a scenario file. `overrides` holds `n_overrides` strings of the
/// form `section.key=value`; it may be NULL when `n_overrides` is 0.
///
/// # Safety
/// `path` and every override must be NUL-terminated strings; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn cn_scenario_load(
    path: *const c_char,
    overrides: *const *const c_char,
    n_overrides: usize,
    out: *mut *mut CnScenario,
) -> CnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let path = as_str(path)?;
        let mut sets = Vec::with_capacity(n_overrides);
        if n_overrides > 0 {
            if overrides.is_null() {
                return Err(null());
            }
            for k in 0..n_overrides {
                sets.push(as_str(*overrides.add(k))?.to_string());
            }
        }
        let inner = Scenario::load(Path::new(path), &sets)?;
        *out = Box::into_raw(Box::new(CnScenario { inner }));
        Ok(())
    })
}

/// # Safety
/// `s` must come from [`cn_scenario_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cn_scenario_free(s: *mut CnScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Number of agents and per-agent action dimension.
///
/// # Safety
/// `s` must be a live scenario handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn cn_scenario_shape(
    s: *const CnScenario,
    num_agents: *mut usize,
    action_dim: *mut usize,
) -> CnStatus {
    guard(|| {
        let s = as_ref(s)?;
        if num_agents.is_null() || action_dim.is_null() {
            return Err(null());
        }
        *num_agents = s.inner.system.game.num_agents();
        *action_dim = s.inner.system.game.action_dim();
        Ok(())
    })
}

/// Solves for the reference equilibrium with the scenario's oracle settings.
///
/// # Safety
/// `s` must be a live scenario handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cn_oracle_solve(s: *const CnScenario, out: *mut *mut CnSolution) -> CnStatus {
    guard(|| {
        let s = as_ref(s)?;
        if out.is_null() {
            return Err(null());
        }
        let inner = s.inner.oracle()?;
        *out = Box::into_raw(Box::new(CnSolution { inner }));
        Ok(())
    })
}

/// # Safety
/// `sol` must come from [`cn_oracle_solve`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cn_solution_free(sol: *mut CnSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Copies the stacked equilibrium action into `buf`.
///
/// # Safety
/// `sol` must be live; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cn_solution_x(sol: *const CnSolution, buf: *mut f64, len: usize) -> CnStatus {
    guard(|| copy_out(as_ref(sol)?.inner.x.as_slice(), buf, len))
}

/// Largest KKT residual of the solution.
///
/// # Safety
/// `sol` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cn_solution_kkt(sol: *const CnSolution, out: *mut f64) -> CnStatus {
    guard(|| {
        let sol = as_ref(sol)?;
        if out.is_null() {
            return Err(null());
        }
        *out = sol.inner.certificate.max_residual();
        Ok(())
    })
}

/// Runs the simulation configured in the scenario. `reference` may be NULL;
/// otherwise the gap to it is tracked.
///
/// # Safety
/// `s` must be live, `reference` NULL or live, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cn_run(
    s: *const CnScenario,
    reference: *const CnSolution,
    out: *mut *mut CnRun,
) -> CnStatus {
    guard(|| {
        let s = as_ref(s)?;
        if out.is_null() {
            return Err(null());
        }
        let xs = reference.as_ref().map(|r| &r.inner.x);
        let inner = sim::run(&s.inner.system, &s.inner.file.sim, xs)?;
        let dim = s.inner.system.game.dim();
        *out = Box::into_raw(Box::new(CnRun { inner, dim }));
        Ok(())
    })
}

/// # Safety
/// `run` must come from [`cn_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cn_run_free(run: *mut CnRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Final time, final gap (NaN without a reference) and largest KKT residual.
///
/// # Safety
/// `run` must be live; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn cn_run_summary(
    run: *const CnRun,
    final_time: *mut f64,
    gap: *mut f64,
    kkt_max: *mut f64,
) -> CnStatus {
    guard(|| {
        let run = as_ref(run)?;
        if final_time.is_null() || gap.is_null() || kkt_max.is_null() {
            return Err(null());
        }
        *final_time = run.inner.final_time;
        *gap = run.inner.gap().unwrap_or(f64::NAN);
        *kkt_max = run.inner.certificate.max_residual();
        Ok(())
    })
}

/// Copies the final stacked plant output (or seeker estimate without
/// plants) into `buf`.
///
/// # Safety
/// `run` must be live; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cn_run_final_x(run: *const CnRun, buf: *mut f64, len: usize) -> CnStatus {
    guard(|| {
        let run = as_ref(run)?;
        let last = run.inner.log.last().ok_or_else(|| Fail(CnStatus::Other, "empty log".into()))?;
        let x: Vec<f64> = last.agents.iter().flat_map(|a| a.x.iter().copied()).collect();
        debug_assert_eq!(x.len(), run.dim);
        copy_out(&x, buf, len)
    })
}

/// Writes the trajectory CSV and its JSON sidecar.
///
/// # Safety
/// `run` must be live; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cn_run_write_log(run: *const CnRun, path: *const c_char) -> CnStatus {
    guard(|| {
        let run = as_ref(run)?;
        sim::write_log(&run.inner.log, Path::new(as_str(path)?))?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_a_status() {
        let st = guard(|| panic!("boom"));
        assert_eq!(st, CnStatus::Panic);
        let msg = unsafe { CStr::from_ptr(cn_last_error()) }.to_str().unwrap().to_string();
        assert_eq!(msg, "panic: boom");
    }

    #[test]
    fn interior_nul_does_not_lose_the_message() {
        set_error("a\0b".into());
        let msg = unsafe { CStr::from_ptr(cn_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "a b");
    }

    #[test]
    fn header_compiles_as_c() {
        let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/coalition_nash.h");
        let Ok(status) = std::process::Command::new("cc")
            .args(["-fsyntax-only", "-x", "c", header])
            .status()
        else {
            return;
        };
        assert!(status.success());
    }
}
