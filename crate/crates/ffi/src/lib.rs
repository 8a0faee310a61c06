//! C ABI over the `circov` simulator.
//!
//! Every function returns a [`CircovStatus`]; on failure a description is
//! kept per thread and can be read with [`circov_last_error_message`].
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use circov::cli::Scenario;
use circov::geometry::{case_study_domain, circular_domain};
use circov::sim::Simulation;
use circov::{AnnulusDomain, Error, Point};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CircovStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Malformed or unsupported scenario text.
    Scenario = 3,
    /// Parameters that parse but cannot be used.
    Config = 4,
    Geometry = 5,
    /// The grid cannot resolve the domain.
    Resolution = 6,
    /// Bars could not split the domain into one region per agent.
    Decomposition = 7,
    /// Any other simulation failure.
    Simulation = 8,
    /// The caller's buffer is too small; the required length is reported.
    BufferTooSmall = 9,
    /// The simulation has reached its horizon.
    Finished = 10,
    /// No data yet (targets before the first step).
    NotReady = 11,
    Panic = 12,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: CircovStatus, msg: impl Into<String>) -> CircovStatus {
    set_error(msg.into());
    status
}

fn status_of(e: &Error) -> CircovStatus {
    match e {
        Error::AtStep { source, .. } => status_of(source),
        Error::Scenario(_) => CircovStatus::Scenario,
        Error::Config(_) => CircovStatus::Config,
        Error::Geometry(_) | Error::DegenerateBar { .. } => CircovStatus::Geometry,
        Error::Resolution(_) => CircovStatus::Resolution,
        Error::Decomposition { .. } => CircovStatus::Decomposition,
        _ => CircovStatus::Simulation,
    }
}

fn from_error(e: Error) -> CircovStatus {
    fail(status_of(&e), e.to_string())
}

/// Runs `f`, turning a panic into [`CircovStatus::Panic`].
fn guard(f: impl FnOnce() -> CircovStatus) -> CircovStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(CircovStatus::Panic, format!("panic: {msg}"))
        }
    }
}

/// Message of the last failure on this thread, or NULL if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn circov_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn circov_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Opaque simulation handle.
pub struct CircovSimulation {
    sim: Simulation,
}

/// Opaque domain handle.
pub struct CircovDomain {
    domain: AnnulusDomain,
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, CircovStatus> {
    if p.is_null() {
        return Err(fail(CircovStatus::NullPointer, "string argument is NULL"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| fail(CircovStatus::InvalidUtf8, e.to_string()))
}

unsafe fn sim_ref<'a>(p: *const CircovSimulation) -> Result<&'a CircovSimulation, CircovStatus> {
    p.as_ref()
        .ok_or_else(|| fail(CircovStatus::NullPointer, "simulation handle is NULL"))
}

macro_rules! try_status {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Builds a simulation from scenario TOML text. Output settings in the
/// scenario are ignored; nothing is written to disk.
///
/// # Safety
/// `scenario_toml` must be NULL or a NUL-terminated string; `out` must be
/// NULL or point to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn circov_simulation_new(
    scenario_toml: *const c_char,
    out: *mut *mut CircovSimulation,
) -> CircovStatus {
    guard(|| {
        if out.is_null() {
            return fail(CircovStatus::NullPointer, "output pointer is NULL");
        }
        *out = ptr::null_mut();
        let text = try_status!(str_arg(scenario_toml));
        let sim = Scenario::parse(text)
            .and_then(|s| s.config())
            .and_then(Simulation::new);
        match sim {
            Ok(sim) => {
                *out = Box::into_raw(Box::new(CircovSimulation { sim }));
                CircovStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Releases a simulation. NULL is ignored.
///
/// # Safety
/// `sim` must be NULL or a handle from [`circov_simulation_new`] that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn circov_simulation_free(sim: *mut CircovSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Advances one step. Returns [`CircovStatus::Finished`] once the horizon
/// (or the early-stop rule) has been reached.
///
/// # Safety
/// `sim` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn circov_simulation_step(sim: *mut CircovSimulation) -> CircovStatus {
    guard(|| {
        let Some(s) = sim.as_mut() else {
            return fail(CircovStatus::NullPointer, "simulation handle is NULL");
        };
        if s.sim.finished() {
            return CircovStatus::Finished;
        }
        match s.sim.step() {
            Ok(_) => CircovStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// Steps until finished or `max_steps` steps have been taken (0 means no
/// limit). The number of steps taken is written to `taken` if non-NULL.
///
/// # Safety
/// `sim` must be NULL or a live handle; `taken` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn circov_simulation_run(
    sim: *mut CircovSimulation,
    max_steps: u64,
    taken: *mut u64,
) -> CircovStatus {
    guard(|| {
        let Some(s) = sim.as_mut() else {
            return fail(CircovStatus::NullPointer, "simulation handle is NULL");
        };
        let mut n = 0u64;
        let mut status = CircovStatus::Ok;
        while !s.sim.finished() && (max_steps == 0 || n < max_steps) {
            if let Err(e) = s.sim.step() {
                status = from_error(e);
                break;
            }
            n += 1;
        }
        if let Some(t) = taken.as_mut() {
            *t = n;
        }
        status
    })
}

/// Reads one value from a simulation into `out`.
unsafe fn scalar<T>(
    sim: *const CircovSimulation,
    out: *mut T,
    f: impl FnOnce(&CircovSimulation) -> T,
) -> CircovStatus {
    guard(|| {
        let s = try_status!(sim_ref(sim));
        let Some(o) = out.as_mut() else {
            return fail(CircovStatus::NullPointer, "output pointer is NULL");
        };
        *o = f(s);
        CircovStatus::Ok
    })
}

/// Simulated time in seconds.
///
/// # Safety
/// `sim` must be NULL or a live handle; `out` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn circov_simulation_time(sim: *const CircovSimulation, out: *mut f64) -> CircovStatus {
    scalar(sim, out, |s| s.sim.state().time)
}

/// Number of agents (and of bars and subregions).
///
/// # Safety
/// `sim` must be NULL or a live handle; `out` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn circov_simulation_agent_count(
    sim: *const CircovSimulation,
    out: *mut usize,
) -> CircovStatus {
    scalar(sim, out, |s| s.sim.config().agents)
}

/// Steps taken so far.
///
/// # Safety
/// `sim` must be NULL or a live handle; `out` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn circov_simulation_step_count(
    sim: *const CircovSimulation,
    out: *mut u64,
) -> CircovStatus {
    scalar(sim, out, |s| s.sim.state().step)
}

/// Whether the run has ended.
///
/// # Safety
/// `sim` must be NULL or a live handle; `out` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn circov_simulation_finished(
    sim: *const CircovSimulation,
    out: *mut bool,
) -> CircovStatus {
    scalar(sim, out, |s| s.sim.finished())
}

/// Relative workload imbalance `max|m_i - m̄| / m̄` of the most recent
/// decomposition.
///
/// # Safety
/// `sim` must be NULL or a live handle; `out` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn circov_simulation_relative_imbalance(
    sim: *const CircovSimulation,
    out: *mut f64,
) -> CircovStatus {
    scalar(sim, out, |s| s.sim.state().workloads.relative_imbalance())
}

/// Copies `values` into `buf` (capacity `len`), reporting the required
/// length in `needed` when non-NULL.
unsafe fn copy_out(values: &[f64], buf: *mut f64, len: usize, needed: *mut usize) -> CircovStatus {
    if let Some(n) = needed.as_mut() {
        *n = values.len();
    }
    if len < values.len() {
        return fail(
            CircovStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", values.len()),
        );
    }
    if values.is_empty() {
        return CircovStatus::Ok;
    }
    if buf.is_null() {
        return fail(CircovStatus::NullPointer, "output buffer is NULL");
    }
    ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    CircovStatus::Ok
}

fn flatten(points: impl Iterator<Item = Point>) -> Vec<f64> {
    points.flat_map(|p| [p.x, p.y]).collect()
}

/// Copies a vector computed from a simulation into a caller buffer.
unsafe fn array(
    sim: *const CircovSimulation,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
    f: impl FnOnce(&CircovSimulation) -> Result<Vec<f64>, CircovStatus>,
) -> CircovStatus {
    guard(|| {
        let s = try_status!(sim_ref(sim));
        let values = try_status!(f(s));
        copy_out(&values, buf, len, needed)
    })
}

/// Agent positions as `x0, y0, x1, y1, …` (2N values).
///
/// # Safety
/// `sim` must be NULL or a live handle; `buf` must hold `len` doubles;
/// `needed` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn circov_simulation_positions(
    sim: *const CircovSimulation,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> CircovStatus {
    array(sim, buf, len, needed, |s| {
        Ok(flatten(s.sim.state().agents.iter().map(|a| a.position)))
    })
}

/// Current targets as `x0, y0, …` (2N values); `NOT_READY` before the
/// first step.
///
/// # Safety
/// `sim` must be NULL or a live handle; `buf` must hold `len` doubles;
/// `needed` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn circov_simulation_targets(
    sim: *const CircovSimulation,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> CircovStatus {
    array(sim, buf, len, needed, |s| {
        let t = &s.sim.state().targets;
        if t.is_empty() {
            Err(fail(
                CircovStatus::NotReady,
                "targets are computed by the first step",
            ))
        } else {
            Ok(flatten(t.iter().map(|t| t.point)))
        }
    })
}

/// Subregion workloads of the most recent decomposition (N values).
///
/// # Safety
/// `sim` must be NULL or a live handle; `buf` must hold `len` doubles;
/// `needed` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn circov_simulation_workloads(
    sim: *const CircovSimulation,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> CircovStatus {
    array(sim, buf, len, needed, |s| Ok(s.sim.state().workloads.m.clone()))
}

/// Bar arc lengths along the inner boundary, counter-clockwise from θ = 0
/// (N values).
///
/// # Safety
/// `sim` must be NULL or a live handle; `buf` must hold `len` doubles;
/// `needed` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn circov_simulation_bars(
    sim: *const CircovSimulation,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> CircovStatus {
    array(sim, buf, len, needed, |s| {
        Ok(s.sim.state().partition.arc_lengths())
    })
}

/// The six-lobe case-study domain (inverse ellipse inside a Fourier curve).
///
/// # Safety
/// `out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn circov_domain_case_study(out: *mut *mut CircovDomain) -> CircovStatus {
    guard(|| {
        let Some(o) = out.as_mut() else {
            return fail(CircovStatus::NullPointer, "output pointer is NULL");
        };
        *o = Box::into_raw(Box::new(CircovDomain {
            domain: case_study_domain(),
        }));
        CircovStatus::Ok
    })
}

/// Concentric circular annulus.
///
/// # Safety
/// `out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn circov_domain_circle(
    r_in: f64,
    r_out: f64,
    out: *mut *mut CircovDomain,
) -> CircovStatus {
    guard(|| {
        let Some(o) = out.as_mut() else {
            return fail(CircovStatus::NullPointer, "output pointer is NULL");
        };
        *o = ptr::null_mut();
        match circular_domain(r_in, r_out) {
            Ok(domain) => {
                *o = Box::into_raw(Box::new(CircovDomain { domain }));
                CircovStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Releases a domain. NULL is ignored.
///
/// # Safety
/// `domain` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn circov_domain_free(domain: *mut CircovDomain) {
    if !domain.is_null() {
        drop(Box::from_raw(domain));
    }
}

/// Barrier `h(x, y)`: positive inside, zero on the boundary.
///
/// # Safety
/// `domain` must be NULL or a live handle; `out` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn circov_domain_barrier(
    domain: *const CircovDomain,
    x: f64,
    y: f64,
    out: *mut f64,
) -> CircovStatus {
    guard(|| {
        let (Some(d), Some(o)) = (domain.as_ref(), out.as_mut()) else {
            return fail(
                CircovStatus::NullPointer,
                "domain handle or output pointer is NULL",
            );
        };
        *o = d.domain.barrier(Point::new(x, y));
        CircovStatus::Ok
    })
}

/// Inner-boundary perimeter in meters.
///
/// # Safety
/// `domain` must be NULL or a live handle; `out` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn circov_domain_perimeter(domain: *const CircovDomain, out: *mut f64) -> CircovStatus {
    guard(|| {
        let (Some(d), Some(o)) = (domain.as_ref(), out.as_mut()) else {
            return fail(
                CircovStatus::NullPointer,
                "domain handle or output pointer is NULL",
            );
        };
        *o = d.domain.perimeter();
        CircovStatus::Ok
    })
}
