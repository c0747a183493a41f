//! C ABI over the qbattery simulator.
//!
//! Specs and traces are opaque handles owned by the caller and released with
//! the matching `_free` function. Every call returns a [`QbStatus`]; on
//! failure [`qb_last_error`] describes the most recent error on the calling
//! thread. Panics are caught at the boundary and reported as
//! [`QbStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use qbattery::config::RunSpec;
use qbattery::experiments::{charge_metrics, ChargeTrace};
use qbattery::metrics::PowerConvention;
use qbattery::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Rejected configuration or out-of-domain parameter.
    InvalidInput = 3,
    /// Integrator, eigensolver or convergence failure.
    Numerical = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

impl From<&Error> for QbStatus {
    fn from(e: &Error) -> Self {
        match e.exit_code() {
            1 => QbStatus::Io,
            3 => QbStatus::Numerical,
            _ => QbStatus::InvalidInput,
        }
    }
}

/// Recorded series of a [`QbTrace`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QbSeries {
    Time = 0,
    DeltaE = 1,
    /// Average power under the spec's convention.
    Power = 2,
    Photons = 3,
    /// `⟨Σσ^z⟩/N`; NaN for qutrits.
    SzPerSite = 4,
}

/// Scalar results of one charging run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QbMetrics {
    pub stable_energy: f64,
    pub max_power: f64,
    pub t_at_max_power: f64,
    pub max_trace_dev: f64,
    pub fock_cutoff: usize,
}

/// Opaque validated run specification.
pub struct QbSpec {
    spec: RunSpec,
}

/// Opaque recorded trajectory.
pub struct QbTrace {
    trace: ChargeTrace,
    power: PowerConvention,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn fail(status: QbStatus, msg: impl Into<String>) -> QbStatus {
    set_error(msg);
    status
}

fn from_error(e: &Error) -> QbStatus {
    fail(QbStatus::from(e), e.to_string())
}

fn guard(f: impl FnOnce() -> QbStatus) -> QbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(QbStatus::Panic, format!("panic: {msg}"))
        }
    }
}

/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, QbStatus> {
    if s.is_null() {
        return Err(fail(QbStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(QbStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn qb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a TOML spec, applying `n_overrides` `key=value` strings, and
/// validates it. On success `*out` receives a new handle.
///
/// # Safety
/// `toml` must be a valid NUL-terminated string; `overrides` must point to
/// `n_overrides` such strings (or be null when `n_overrides` is 0); `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn qb_spec_parse(
    toml: *const c_char,
    overrides: *const *const c_char,
    n_overrides: usize,
    out: *mut *mut QbSpec,
) -> QbStatus {
    guard(|| {
        if out.is_null() {
            return fail(QbStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let text = match read_str(toml, "toml") {
            Ok(t) => t,
            Err(s) => return s,
        };
        if n_overrides > 0 && overrides.is_null() {
            return fail(QbStatus::NullPointer, "overrides is null");
        }
        let mut items = Vec::with_capacity(n_overrides);
        for k in 0..n_overrides {
            match read_str(*overrides.add(k), "override") {
                Ok(s) => items.push(s.to_string()),
                Err(s) => return s,
            }
        }
        match RunSpec::load_str(text, &items) {
            Ok((spec, _warnings)) => {
                *out = Box::into_raw(Box::new(QbSpec { spec }));
                QbStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Normalized spec as TOML. Release the string with [`qb_string_free`].
///
/// # Safety
/// `spec` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qb_spec_to_toml(spec: *const QbSpec, out: *mut *mut c_char) -> QbStatus {
    guard(|| {
        if spec.is_null() || out.is_null() {
            return fail(QbStatus::NullPointer, "spec or out is null");
        }
        *out = ptr::null_mut();
        match (*spec).spec.to_toml() {
            Ok(text) => match CString::new(text) {
                Ok(c) => {
                    *out = c.into_raw();
                    QbStatus::Ok
                }
                Err(_) => fail(QbStatus::InvalidInput, "spec text contains NUL"),
            },
            Err(e) => from_error(&e),
        }
    })
}

/// # Safety
/// `spec` must be null or a handle from [`qb_spec_parse`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qb_spec_free(spec: *mut QbSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// `E_s` and `P_max` of the spec's model and rates.
///
/// # Safety
/// `spec` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qb_run_metrics(spec: *const QbSpec, out: *mut QbMetrics) -> QbStatus {
    guard(|| {
        if spec.is_null() || out.is_null() {
            return fail(QbStatus::NullPointer, "spec or out is null");
        }
        let spec = &(*spec).spec;
        let result = spec.setup().and_then(|setup| {
            let m = charge_metrics(&setup, &spec.settings())?;
            Ok(QbMetrics {
                stable_energy: m.stable.value,
                max_power: m.max_power,
                t_at_max_power: m.t_at_max_power,
                max_trace_dev: m.max_trace_dev,
                fock_cutoff: setup.model.fock_cutoff,
            })
        });
        match result {
            Ok(m) => {
                *out = m;
                QbStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Full charging trajectory of the spec. On success `*out` receives a new
/// handle.
///
/// # Safety
/// `spec` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qb_run_trace(spec: *const QbSpec, out: *mut *mut QbTrace) -> QbStatus {
    guard(|| {
        if spec.is_null() || out.is_null() {
            return fail(QbStatus::NullPointer, "spec or out is null");
        }
        *out = ptr::null_mut();
        let spec = &(*spec).spec;
        let settings = spec.settings();
        let result = spec
            .setup()
            .and_then(|setup| setup.prepare())
            .and_then(|prep| prep.trajectory(&settings.integrator));
        match result {
            Ok(trace) => {
                *out = Box::into_raw(Box::new(QbTrace {
                    trace,
                    power: settings.power,
                }));
                QbStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Number of samples in the trace; 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qb_trace_len(trace: *const QbTrace) -> usize {
    if trace.is_null() {
        0
    } else {
        (*trace).trace.times.len()
    }
}

/// Copies one series into `buf`, which must hold at least
/// [`qb_trace_len`] values.
///
/// # Safety
/// `trace` must be a live handle and `buf` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qb_trace_series(
    trace: *const QbTrace,
    series: QbSeries,
    buf: *mut f64,
    len: usize,
) -> QbStatus {
    guard(|| {
        if trace.is_null() || buf.is_null() {
            return fail(QbStatus::NullPointer, "trace or buf is null");
        }
        let t = &*trace;
        let power;
        let values: &[f64] = match series {
            QbSeries::Time => &t.trace.times,
            QbSeries::DeltaE => &t.trace.delta_e,
            QbSeries::Power => {
                power = t.trace.power(t.power);
                &power
            }
            QbSeries::Photons => &t.trace.photons,
            QbSeries::SzPerSite => &t.trace.sz_per_site,
        };
        if len < values.len() {
            return fail(
                QbStatus::BufferTooSmall,
                format!("buffer holds {len} values, trace has {}", values.len()),
            );
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
        QbStatus::Ok
    })
}

/// # Safety
/// `trace` must be null or a handle from [`qb_run_trace`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qb_trace_free(trace: *mut QbTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}
