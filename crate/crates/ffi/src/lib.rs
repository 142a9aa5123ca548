//! C interface to the solver, the inf-sup tables and the biorthogonality check.
//!
//! Every fallible function returns a [`ParadatStatus`]; on failure the message
//! is available from [`paradat_last_error`] on the same thread. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use paradat::assembly::{manufactured_by_name, ProblemData, TensorGrid};
use paradat::discretization::ObservationWindow;
use paradat::infsup::{self, AppendixCheck, RefinementRule};
use paradat::linalg::{PcgConfig, PcgStatus, StopRule};
use paradat::solver::{FoslsSystem, SecondOrderSystem};
use paradat::Error;

/// Result codes of all fallible calls.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParadatStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    SolverFailure = 3,
    BufferTooSmall = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParadatFormulation {
    SecondOrder = 0,
    Fosls = 1,
}

/// Parameters of one solve on the unit square `I × Ω = (0,1)²` with the
/// manufactured state `(t³ + 1) sin(πx)`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ParadatConfig {
    pub formulation: ParadatFormulation,
    /// Cells per direction.
    pub n: usize,
    /// Regularization parameter; a negative value selects `ε = h`.
    pub eps: f64,
    pub ell: usize,
    pub estimate_level: usize,
    pub omega_lo: f64,
    pub omega_hi: f64,
    /// Constant perturbation of the observed state.
    pub lambda: f64,
    /// Positive: fixed relative tolerance. Zero: estimator-coupled stop.
    pub tol: f64,
    pub max_iters: usize,
}

/// Outcome of a solve.
pub struct ParadatReport {
    dim: usize,
    estimator0: f64,
    estimator_eps: f64,
    iterations: usize,
    converged: bool,
    cond_est: f64,
    u: Vec<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: ParadatStatus, msg: impl Into<String>) -> ParadatStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> ParadatStatus {
    let status = match e {
        Error::InvalidInput(_) | Error::Unsupported(_) => ParadatStatus::InvalidInput,
        _ => ParadatStatus::SolverFailure,
    };
    fail(status, e.to_string())
}

fn guarded(f: impl FnOnce() -> ParadatStatus) -> ParadatStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(ParadatStatus::Panic, "internal panic"),
    }
}

/// Message of the last failure on this thread, or null. Valid until the next
/// call into this library on the same thread.
#[no_mangle]
pub extern "C" fn paradat_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn paradat_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Fill `out` with the defaults: second order, `n = 16`, `ε = h`,
/// `(ℓ, L) = (0, 2)`, `ω = [¼, ¾]`, no perturbation, coupled stop.
///
/// # Safety
/// `out` must be null or point to writable memory for one config.
#[no_mangle]
pub unsafe extern "C" fn paradat_config_default(out: *mut ParadatConfig) -> ParadatStatus {
    if out.is_null() {
        return fail(ParadatStatus::NullPointer, "config pointer is null");
    }
    let w = ObservationWindow::default();
    out.write(ParadatConfig {
        formulation: ParadatFormulation::SecondOrder,
        n: 16,
        eps: -1.0,
        ell: 0,
        estimate_level: 2,
        omega_lo: w.omega_lo,
        omega_hi: w.omega_hi,
        lambda: 0.0,
        tol: 0.0,
        max_iters: 2000,
    });
    ParadatStatus::Ok
}

fn solve(cfg: &ParadatConfig) -> Result<ParadatReport, ParadatStatus> {
    if cfg.n < 1 {
        return Err(fail(ParadatStatus::InvalidInput, "n must be ≥ 1"));
    }
    let h = 1.0 / cfg.n as f64;
    let eps = if cfg.eps < 0.0 { h } else { cfg.eps };
    let window = ObservationWindow::new(cfg.omega_lo, cfg.omega_hi, ObservationWindow::default().eta).map_err(from_error)?;
    let data = ProblemData::manufactured(manufactured_by_name("sine-cubic").map_err(from_error)?, window)
        .with_lambda(cfg.lambda)
        .with_eps(eps);
    let stop_rule = if cfg.tol > 0.0 {
        StopRule::FixedTol { tol: cfg.tol }
    } else {
        StopRule::EstimatorCoupled { mu: 1.0 }
    };
    let pcg = PcgConfig {
        max_iters: cfg.max_iters,
        stop_rule,
        record_lanczos: true,
    };
    let grid = TensorGrid::unit(cfg.n).map_err(from_error)?;
    let report = match cfg.formulation {
        ParadatFormulation::SecondOrder => {
            let sys = SecondOrderSystem::assemble(&grid, &data, cfg.ell, cfg.estimate_level).map_err(from_error)?;
            let r = sys.solve(&pcg).map_err(from_error)?;
            ParadatReport {
                dim: r.dim,
                estimator0: r.estimator0,
                estimator_eps: r.estimator_eps,
                iterations: r.pcg.iterations,
                converged: r.pcg.status == PcgStatus::Converged,
                cond_est: r.pcg.spectral.map_or(f64::NAN, |s| s.cond_est),
                u: r.u,
            }
        }
        ParadatFormulation::Fosls => {
            let sys = FoslsSystem::assemble(&grid, &data, cfg.ell, cfg.estimate_level).map_err(from_error)?;
            let r = sys.solve(&pcg).map_err(from_error)?;
            ParadatReport {
                dim: sys.dim_trial(),
                estimator0: r.estimator0,
                estimator_eps: r.estimator_eps,
                iterations: r.pcg.iterations,
                converged: r.pcg.status == PcgStatus::Converged,
                cond_est: r.pcg.spectral.map_or(f64::NAN, |s| s.cond_est),
                u: r.u,
            }
        }
    };
    Ok(report)
}

/// Assemble and solve; on success `*out` receives a new report handle.
///
/// # Safety
/// `cfg` must be null or point to a valid config, `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn paradat_solve(cfg: *const ParadatConfig, out: *mut *mut ParadatReport) -> ParadatStatus {
    guarded(|| {
        if cfg.is_null() || out.is_null() {
            return fail(ParadatStatus::NullPointer, "null argument to paradat_solve");
        }
        out.write(ptr::null_mut());
        match solve(&*cfg) {
            Ok(r) => {
                out.write(Box::into_raw(Box::new(r)));
                ParadatStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// Release a report. Null is ignored.
///
/// # Safety
/// `report` must be null or a handle from [`paradat_solve`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn paradat_report_free(report: *mut ParadatReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Scalar results of a report. Estimators are the squared functionals
/// `G̃₀`, `G̃_ε` (or their first-order analogues) at the estimator level.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ParadatSummary {
    pub dim: usize,
    pub estimator0: f64,
    pub estimator_eps: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Lanczos estimate; NaN if unavailable.
    pub cond_est: f64,
}

/// # Safety
/// `report` must be a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn paradat_report_summary(report: *const ParadatReport, out: *mut ParadatSummary) -> ParadatStatus {
    if report.is_null() || out.is_null() {
        return fail(ParadatStatus::NullPointer, "null argument to paradat_report_summary");
    }
    let r = &*report;
    out.write(ParadatSummary {
        dim: r.dim,
        estimator0: r.estimator0,
        estimator_eps: r.estimator_eps,
        iterations: r.iterations,
        converged: r.converged,
        cond_est: r.cond_est,
    });
    ParadatStatus::Ok
}

/// Copy the state coefficients (time-major, `n_time · n_space` entries)
/// into `buf`. `*len` holds the capacity on entry and the required length
/// on return; a short buffer yields `BufferTooSmall` without copying.
///
/// # Safety
/// `report` must be a live handle, `len` writable, and `buf` valid for `*len`
/// doubles (or null when `*len` is 0).
#[no_mangle]
pub unsafe extern "C" fn paradat_report_state(report: *const ParadatReport, buf: *mut f64, len: *mut usize) -> ParadatStatus {
    if report.is_null() || len.is_null() {
        return fail(ParadatStatus::NullPointer, "null argument to paradat_report_state");
    }
    let u = &(*report).u;
    let cap = *len;
    *len = u.len();
    if cap < u.len() {
        return fail(ParadatStatus::BufferTooSmall, format!("state needs {} entries", u.len()));
    }
    if buf.is_null() {
        return fail(ParadatStatus::NullPointer, "state buffer is null");
    }
    ptr::copy_nonoverlapping(u.as_ptr(), buf, u.len());
    ParadatStatus::Ok
}

/// Reference-element inf-sup constant: `d = 1` uses bisection (`q ≤ 4`),
/// `d = 2` red refinement (`q ≤ 2`).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn paradat_infsup_alpha(d: usize, q: usize, level: usize, out: *mut f64) -> ParadatStatus {
    guarded(|| {
        if out.is_null() {
            return fail(ParadatStatus::NullPointer, "null output for paradat_infsup_alpha");
        }
        let rule: RefinementRule = match infsup::default_rule(d) {
            Ok(r) => r,
            Err(e) => return from_error(e),
        };
        match infsup::alpha(d, q, level, rule) {
            Ok(a) => {
                out.write(a);
                ParadatStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Run the biorthogonality checks on the red-refined triangle. `mass` receives
/// the 6 × 6 generalized mass matrix row by row (36 doubles), `passed`
/// whether every check holds to 1e-12.
///
/// # Safety
/// `mass` must be valid for 36 doubles and `passed` writable.
#[no_mangle]
pub unsafe extern "C" fn paradat_appendix_check(mass: *mut f64, passed: *mut bool) -> ParadatStatus {
    guarded(|| {
        if mass.is_null() || passed.is_null() {
            return fail(ParadatStatus::NullPointer, "null argument to paradat_appendix_check");
        }
        match AppendixCheck::run() {
            Ok(c) => {
                for (i, row) in c.mass.iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        mass.add(6 * i + j).write(*v);
                    }
                }
                passed.write(c.passed(1e-12));
                ParadatStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}
