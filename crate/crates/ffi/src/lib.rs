//! C ABI for conekit.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free` function. Every fallible call returns a [`ConekitStatus`];
//! the message of the most recent failure on the calling thread is available
//! from [`conekit_last_error`]. Strings returned to C are released with
//! [`conekit_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use num_complex::Complex64;

use conekit::cone_charts::{ChartMap, WPoint};
use conekit::glue_max::{m_eta, MollifierSpec};
use conekit::harness::{run_suite_timed, write_outputs, ExperimentConfig, RunReport, Status, Timings};
use conekit::weighted_holder::phi_function;
use conekit::ConeError;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConekitStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Domain = 4,
    Numerical = 5,
    Io = 6,
    OutOfRange = 7,
    Panic = 8,
}

/// Outcome of one check in a report.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConekitCheckStatus {
    Pass = 0,
    Fail = 1,
    Error = 2,
    ExpectedFail = 3,
    UnexpectedPass = 4,
}

impl From<Status> for ConekitCheckStatus {
    fn from(s: Status) -> Self {
        match s {
            Status::Pass => Self::Pass,
            Status::Fail => Self::Fail,
            Status::Error => Self::Error,
            Status::ExpectedFail => Self::ExpectedFail,
            Status::UnexpectedPass => Self::UnexpectedPass,
        }
    }
}

/// Opaque experiment configuration.
pub struct ConekitConfig(ExperimentConfig);

/// Opaque run report together with its timings.
pub struct ConekitReport {
    report: RunReport,
    timings: Timings,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(s));
}

fn status_of(e: &ConeError) -> ConekitStatus {
    match e {
        ConeError::Config(_) => ConekitStatus::Config,
        ConeError::Io(_) | ConeError::Format(_) => ConekitStatus::Io,
        ConeError::Numerical(_) | ConeError::IllConditioned(_) | ConeError::Positivity(_) => ConekitStatus::Numerical,
        _ => ConekitStatus::Domain,
    }
}

struct Failure(ConekitStatus, String);

impl From<ConeError> for Failure {
    fn from(e: ConeError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Run `body`, translating errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> ConekitStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => ConekitStatus::Ok,
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            ConekitStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(ConekitStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(ConekitStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn conekit_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn conekit_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default configuration (all checks, built-in parameters).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn conekit_config_default(out: *mut *mut ConekitConfig) -> ConekitStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(ConekitConfig(ExperimentConfig::default())));
        Ok(())
    })
}

/// Parse and validate a TOML configuration.
///
/// # Safety
/// `toml` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn conekit_config_from_toml(toml: *const c_char, out: *mut *mut ConekitConfig) -> ConekitStatus {
    guard(|| {
        let text = str_arg(toml, "toml")?;
        let out = out_arg(out, "out")?;
        let cfg = ExperimentConfig::from_toml_str(text)?;
        cfg.validate()?;
        *out = Box::into_raw(Box::new(ConekitConfig(cfg)));
        Ok(())
    })
}

/// Restrict the run to a comma-separated list of check names ("" selects all).
///
/// # Safety
/// `cfg` must be a live config handle and `names` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn conekit_config_select_checks(cfg: *mut ConekitConfig, names: *const c_char) -> ConekitStatus {
    guard(|| {
        let names = str_arg(names, "names")?;
        let cfg = out_arg(cfg, "cfg")?;
        let mut next = cfg.0.clone();
        next.checks = names.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
        next.validate()?;
        cfg.0 = next;
        Ok(())
    })
}

/// Serialize a config to TOML; free the result with [`conekit_string_free`].
///
/// # Safety
/// `cfg` must be a live config handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn conekit_config_to_toml(cfg: *const ConekitConfig, out: *mut *mut c_char) -> ConekitStatus {
    guard(|| {
        let cfg = handle(cfg, "cfg")?;
        let out = out_arg(out, "out")?;
        *out = CString::new(cfg.0.to_toml_string()).map_err(|e| Failure(ConekitStatus::Io, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Release a config handle. Null is ignored.
///
/// # Safety
/// `cfg` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn conekit_config_free(cfg: *mut ConekitConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Run the suite. A report is produced even when checks fail; the status
/// reflects only whether the run itself could be carried out.
///
/// # Safety
/// `cfg` must be a live config handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn conekit_run(cfg: *const ConekitConfig, out: *mut *mut ConekitReport) -> ConekitStatus {
    guard(|| {
        let cfg = handle(cfg, "cfg")?;
        let out = out_arg(out, "out")?;
        let (report, timings) = run_suite_timed(&cfg.0)?;
        *out = Box::into_raw(Box::new(ConekitReport { report, timings }));
        Ok(())
    })
}

/// 1 when every non-expected-fail check passed, 0 otherwise (or on null).
///
/// # Safety
/// `rep` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn conekit_report_all_pass(rep: *const ConekitReport) -> i32 {
    rep.as_ref().map_or(0, |r| r.report.all_pass as i32)
}

/// Number of checks in the report (0 on null).
///
/// # Safety
/// `rep` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn conekit_report_check_count(rep: *const ConekitReport) -> usize {
    rep.as_ref().map_or(0, |r| r.report.checks.len())
}

/// Status and criterion number of check `index`.
///
/// # Safety
/// `rep` must be a live report handle; `status` and `criterion` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn conekit_report_check(
    rep: *const ConekitReport,
    index: usize,
    status: *mut ConekitCheckStatus,
    criterion: *mut u32,
) -> ConekitStatus {
    guard(|| {
        let rep = handle(rep, "rep")?;
        let (status, criterion) = (out_arg(status, "status")?, out_arg(criterion, "criterion")?);
        let c = rep.report.checks.get(index).ok_or_else(|| {
            Failure(ConekitStatus::OutOfRange, format!("check index {index} out of range"))
        })?;
        *status = c.status.into();
        *criterion = c.criterion;
        Ok(())
    })
}

/// Name of check `index`; free the result with [`conekit_string_free`].
///
/// # Safety
/// `rep` must be a live report handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn conekit_report_check_name(
    rep: *const ConekitReport,
    index: usize,
    out: *mut *mut c_char,
) -> ConekitStatus {
    guard(|| {
        let rep = handle(rep, "rep")?;
        let out = out_arg(out, "out")?;
        let c = rep.report.checks.get(index).ok_or_else(|| {
            Failure(ConekitStatus::OutOfRange, format!("check index {index} out of range"))
        })?;
        *out = CString::new(c.name.clone()).expect("check names have no nul").into_raw();
        Ok(())
    })
}

/// Report as pretty JSON; free the result with [`conekit_string_free`].
///
/// # Safety
/// `rep` must be a live report handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn conekit_report_to_json(rep: *const ConekitReport, out: *mut *mut c_char) -> ConekitStatus {
    guard(|| {
        let rep = handle(rep, "rep")?;
        let out = out_arg(out, "out")?;
        *out = CString::new(rep.report.to_json()).map_err(|e| Failure(ConekitStatus::Io, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Write report.json, timings.json and plots/ into `dir`.
///
/// # Safety
/// `rep` must be a live report handle and `dir` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn conekit_report_write(rep: *const ConekitReport, dir: *const c_char) -> ConekitStatus {
    guard(|| {
        let rep = handle(rep, "rep")?;
        let dir = str_arg(dir, "dir")?;
        write_outputs(&rep.report, &rep.timings, Path::new(dir))?;
        Ok(())
    })
}

/// Release a report handle. Null is ignored.
///
/// # Safety
/// `rep` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn conekit_report_free(rep: *mut ConekitReport) {
    if !rep.is_null() {
        drop(Box::from_raw(rep));
    }
}

/// Transverse chart map z = ψ_k(w) for cone angle 2πβ.
///
/// # Safety
/// `z_re` and `z_im` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn conekit_chart_psi(
    beta: f64,
    k: u32,
    w_re: f64,
    w_im: f64,
    z_re: *mut f64,
    z_im: *mut f64,
) -> ConekitStatus {
    guard(|| {
        let (z_re, z_im) = (out_arg(z_re, "z_re")?, out_arg(z_im, "z_im")?);
        let chart = ChartMap::new(k, beta)?;
        let w = Complex64::new(w_re, w_im);
        let z = chart.psi(&WPoint::transverse(w.norm(), w.arg()))?.last();
        *z_re = z.re;
        *z_im = z.im;
        Ok(())
    })
}

/// φ(r, t) for Hölder exponent `alpha`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn conekit_phi(r: f64, t: f64, alpha: f64, out: *mut f64) -> ConekitStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = phi_function(r, t, alpha)?;
        Ok(())
    })
}

/// Regularized maximum M_η(t1, t2) with the default mollifier.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn conekit_m_eta(t1: f64, t2: f64, eta: f64, out: *mut f64) -> ConekitStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = m_eta(t1, t2, &MollifierSpec::new(eta)?)?;
        Ok(())
    })
}
