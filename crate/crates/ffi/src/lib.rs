//! C ABI over the krefcheck pipeline.
//!
//! Options and reports are opaque handles created and freed through this
//! interface. Every call returns a `KcStatus`; on failure the message is
//! available from `kc_last_error` on the same thread until the next call.
//! Strings handed out by a report stay valid until the report is freed.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::time::Duration;

use krefcheck::pipeline::{self, chc_script, CheckOptions, EngineKind};
use krefcheck::report::{Report, VerdictName};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KcStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidOption = 3,
    /// Parsing, validation, harness or engine setup failed.
    Pipeline = 4,
    Panic = 5,
}

/// Verdict of a finished check; the values match the CLI exit codes
/// except that timeout and unknown are kept apart.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KcVerdict {
    Safe = 0,
    Bug = 1,
    Timeout = 2,
    Unknown = 3,
}

impl From<VerdictName> for KcVerdict {
    fn from(v: VerdictName) -> Self {
        match v {
            VerdictName::Safe => KcVerdict::Safe,
            VerdictName::Bug => KcVerdict::Bug,
            VerdictName::Timeout => KcVerdict::Timeout,
            VerdictName::Unknown => KcVerdict::Unknown,
        }
    }
}

/// Check configuration. Create with `kc_options_new`.
pub struct KcOptions {
    inner: CheckOptions,
}

/// Outcome of `kc_check`. Free with `kc_report_free`.
pub struct KcReport {
    report: Report,
    json: CString,
    text: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(KcStatus, String);

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> KcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KcStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(format!("internal error: {msg}"));
            KcStatus::Panic
        }
    }
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(KcStatus::NullArgument, format!("{what} is null")))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(KcStatus::NullArgument, format!("{what} is null")))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(KcStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(KcStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn optional_string(p: *const c_char, what: &str) -> Result<Option<String>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        string(p, what).map(|s| Some(s.to_string()))
    }
}

fn c_string(s: String) -> CString {
    CString::new(s.replace('\0', " ")).expect("no interior nul")
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on this thread.
#[no_mangle]
pub extern "C" fn kc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn kc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Allocates default options into `*out`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn kc_options_new(out: *mut *mut KcOptions) -> KcStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = Box::into_raw(Box::new(KcOptions {
            inner: CheckOptions::default(),
        }));
        Ok(())
    })
}

/// # Safety
/// `opts` must be null or a handle from `kc_options_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kc_options_free(opts: *mut KcOptions) {
    if !opts.is_null() {
        drop(Box::from_raw(opts));
    }
}

/// Selects the engine by name: "enum", "bmc" or "chc".
///
/// # Safety
/// `opts` must be a live handle; `engine` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn kc_options_set_engine(opts: *mut KcOptions, engine: *const c_char) -> KcStatus {
    guard(|| {
        let o = deref_mut(opts, "opts")?;
        let name = string(engine, "engine")?;
        o.inner.engine = match name {
            "enum" => EngineKind::Enum,
            "bmc" => EngineKind::Bmc,
            "chc" => EngineKind::Chc,
            _ => return Err(Failure(KcStatus::InvalidOption, format!("unknown engine {name:?}"))),
        };
        Ok(())
    })
}

/// Sets the entry function; null selects it automatically.
///
/// # Safety
/// `opts` must be a live handle; `entry` null or a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn kc_options_set_entry(opts: *mut KcOptions, entry: *const c_char) -> KcStatus {
    guard(|| {
        let o = deref_mut(opts, "opts")?;
        o.inner.entry = optional_string(entry, "entry")?;
        Ok(())
    })
}

/// Loop bound for the bmc engine; must be at least 1.
///
/// # Safety
/// `opts` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn kc_options_set_bound(opts: *mut KcOptions, bound: u32) -> KcStatus {
    guard(|| {
        let o = deref_mut(opts, "opts")?;
        if bound == 0 {
            return Err(Failure(KcStatus::InvalidOption, "bound must be at least 1".into()));
        }
        o.inner.bound = bound;
        Ok(())
    })
}

/// Number of values each nondeterministic integer ranges over; at least 1.
///
/// # Safety
/// `opts` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn kc_options_set_domain(opts: *mut KcOptions, domain: u32) -> KcStatus {
    guard(|| {
        let o = deref_mut(opts, "opts")?;
        if domain == 0 {
            return Err(Failure(KcStatus::InvalidOption, "domain must be at least 1".into()));
        }
        o.inner.domain = domain;
        Ok(())
    })
}

/// Step budget of the explicit engines.
///
/// # Safety
/// `opts` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn kc_options_set_budget(opts: *mut KcOptions, budget: u64) -> KcStatus {
    guard(|| {
        deref_mut(opts, "opts")?.inner.budget = budget;
        Ok(())
    })
}

/// # Safety
/// `opts` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn kc_options_set_slice(opts: *mut KcOptions, slice: bool) -> KcStatus {
    guard(|| {
        deref_mut(opts, "opts")?.inner.slice = slice;
        Ok(())
    })
}

/// # Safety
/// `opts` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn kc_options_set_underflow_check(opts: *mut KcOptions, on: bool) -> KcStatus {
    guard(|| {
        deref_mut(opts, "opts")?.inner.underflow_check = on;
        Ok(())
    })
}

/// Horn solver command with a `{file}` placeholder, and its timeout in
/// milliseconds. A null command disables the chc engine.
///
/// # Safety
/// `opts` must be a live handle; `cmd` null or a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn kc_options_set_solver(
    opts: *mut KcOptions,
    cmd: *const c_char,
    timeout_ms: u64,
) -> KcStatus {
    guard(|| {
        let o = deref_mut(opts, "opts")?;
        o.inner.solver_cmd = optional_string(cmd, "cmd")?;
        o.inner.solver_timeout = Duration::from_millis(timeout_ms);
        Ok(())
    })
}

/// Checks the KIR program `text`; `driver` names it in the report. On
/// success `*out` receives a report handle.
///
/// # Safety
/// `text` and `driver` must be nul-terminated strings, `opts` null (for
/// defaults) or a live handle, and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn kc_check(
    text: *const c_char,
    driver: *const c_char,
    opts: *const KcOptions,
    out: *mut *mut KcReport,
) -> KcStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = ptr::null_mut();
        let text = string(text, "text")?;
        let driver = string(driver, "driver")?;
        let defaults = CheckOptions::default();
        let o = if opts.is_null() { &defaults } else { &deref(opts, "opts")?.inner };
        let report = pipeline::check(text, driver, o)
            .map_err(|e| Failure(KcStatus::Pipeline, e.to_string()))?;
        let json = c_string(report.to_json());
        let text = c_string(report.to_text());
        *out = Box::into_raw(Box::new(KcReport { report, json, text }));
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle from `kc_check` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kc_report_free(report: *mut KcReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `report` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn kc_report_verdict(report: *const KcReport, out: *mut KcVerdict) -> KcStatus {
    guard(|| {
        let r = deref(report, "report")?;
        *deref_mut(out, "out")? = r.report.verdict.into();
        Ok(())
    })
}

/// Process exit status the CLI would return for this report, or -1 when
/// `report` is null.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kc_report_exit_code(report: *const KcReport) -> i32 {
    report.as_ref().map_or(-1, |r| r.report.exit_code())
}

/// Machine-readable report; owned by the handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kc_report_json(report: *const KcReport) -> *const c_char {
    report.as_ref().map_or(ptr::null(), |r| r.json.as_ptr())
}

/// Human-readable report; owned by the handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kc_report_text(report: *const KcReport) -> *const c_char {
    report.as_ref().map_or(ptr::null(), |r| r.text.as_ptr())
}

/// Writes the SMT-LIB Horn script for `text` into `*out`. Release it with
/// `kc_string_free`.
///
/// # Safety
/// Same contract as `kc_check`.
#[no_mangle]
pub unsafe extern "C" fn kc_emit_chc(
    text: *const c_char,
    driver: *const c_char,
    opts: *const KcOptions,
    out: *mut *mut c_char,
) -> KcStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = ptr::null_mut();
        let text = string(text, "text")?;
        let driver = string(driver, "driver")?;
        let defaults = CheckOptions::default();
        let o = if opts.is_null() { &defaults } else { &deref(opts, "opts")?.inner };
        let pipe = |e: krefcheck::pipeline::PipelineError| Failure(KcStatus::Pipeline, e.to_string());
        let prepared = pipeline::prepare(text, driver, o).map_err(pipe)?;
        let (script, _) = chc_script(&prepared.program, o).map_err(pipe)?;
        *out = c_string(script).into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by `kc_emit_chc` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
