use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use krefcheck_ffi::*;

const LEAK: &str = include_str!("../../../corpus/tpm_leak.kir");
const FIXED: &str = include_str!("../../../corpus/tpm_fixed.kir");

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> Option<String> {
    let p = kc_last_error();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

fn check(text: &str, opts: *const KcOptions) -> (KcStatus, *mut KcReport) {
    let (t, d) = (c(text), c("drv"));
    let mut r = ptr::null_mut();
    let s = unsafe { kc_check(t.as_ptr(), d.as_ptr(), opts, &mut r) };
    (s, r)
}

fn verdict(r: *const KcReport) -> KcVerdict {
    let mut v = KcVerdict::Unknown;
    assert_eq!(unsafe { kc_report_verdict(r, &mut v) }, KcStatus::Ok);
    v
}

#[test]
fn leak_and_fix_with_default_options() {
    let (s, r) = check(LEAK, ptr::null());
    assert_eq!(s, KcStatus::Ok, "{:?}", last_error());
    assert_eq!(verdict(r), KcVerdict::Bug);
    assert_eq!(unsafe { kc_report_exit_code(r) }, 1);
    let json = unsafe { CStr::from_ptr(kc_report_json(r)) }.to_str().unwrap();
    let parsed = krefcheck::report::Report::from_json(json).unwrap();
    assert_eq!(parsed.driver, "drv");
    assert!(!unsafe { kc_report_text(r) }.is_null());
    unsafe { kc_report_free(r) };

    let (s, r) = check(FIXED, ptr::null());
    assert_eq!(s, KcStatus::Ok);
    assert_eq!(verdict(r), KcVerdict::Safe);
    assert_eq!(unsafe { kc_report_exit_code(r) }, 0);
    unsafe { kc_report_free(r) };
}

#[test]
fn options_handle() {
    let mut o = ptr::null_mut();
    assert_eq!(unsafe { kc_options_new(&mut o) }, KcStatus::Ok);
    let bmc = c("bmc");
    unsafe {
        assert_eq!(kc_options_set_engine(o, bmc.as_ptr()), KcStatus::Ok);
        assert_eq!(kc_options_set_bound(o, 2), KcStatus::Ok);
        assert_eq!(kc_options_set_domain(o, 2), KcStatus::Ok);
        assert_eq!(kc_options_set_slice(o, false), KcStatus::Ok);
        assert_eq!(kc_options_set_underflow_check(o, true), KcStatus::Ok);
        assert_eq!(kc_options_set_entry(o, ptr::null()), KcStatus::Ok);
    }
    let (s, r) = check(LEAK, o);
    assert_eq!(s, KcStatus::Ok);
    assert_eq!(verdict(r), KcVerdict::Bug);
    let json = unsafe { CStr::from_ptr(kc_report_json(r)) }.to_str().unwrap();
    let parsed = krefcheck::report::Report::from_json(json).unwrap();
    assert_eq!((parsed.engine.as_str(), parsed.bound, parsed.sliced), ("bmc", Some(2), false));
    unsafe {
        kc_report_free(r);
        assert_eq!(kc_options_set_budget(o, 1), KcStatus::Ok);
    }
    let (s, r) = check(LEAK, o);
    assert_eq!(s, KcStatus::Ok);
    assert_eq!(verdict(r), KcVerdict::Timeout);
    assert_eq!(unsafe { kc_report_exit_code(r) }, 2);
    unsafe {
        kc_report_free(r);
        kc_options_free(o);
    }
}

#[test]
fn invalid_options_are_rejected() {
    let mut o = ptr::null_mut();
    assert_eq!(unsafe { kc_options_new(&mut o) }, KcStatus::Ok);
    let bad = c("bdd");
    unsafe {
        assert_eq!(kc_options_set_engine(o, bad.as_ptr()), KcStatus::InvalidOption);
        assert!(last_error().unwrap().contains("bdd"));
        assert_eq!(kc_options_set_bound(o, 0), KcStatus::InvalidOption);
        assert_eq!(kc_options_set_domain(o, 0), KcStatus::InvalidOption);
        assert_eq!(kc_options_set_engine(o, ptr::null()), KcStatus::NullArgument);
        assert_eq!(kc_options_set_slice(ptr::null_mut(), true), KcStatus::NullArgument);
        kc_options_free(o);
    }
}

#[test]
fn errors_and_null_arguments() {
    let (s, r) = check("define void @f( {", ptr::null());
    assert_eq!(s, KcStatus::Pipeline);
    assert!(r.is_null());
    assert!(last_error().is_some());

    let mut r = ptr::null_mut();
    let d = c("drv");
    assert_eq!(unsafe { kc_check(ptr::null(), d.as_ptr(), ptr::null(), &mut r) }, KcStatus::NullArgument);
    let t = c(LEAK);
    assert_eq!(
        unsafe { kc_check(t.as_ptr(), d.as_ptr(), ptr::null(), ptr::null_mut()) },
        KcStatus::NullArgument
    );
    let bytes = [0xffu8, 0];
    assert_eq!(
        unsafe { kc_check(bytes.as_ptr().cast(), d.as_ptr(), ptr::null(), &mut r) },
        KcStatus::InvalidUtf8
    );

    let (s, r) = check(FIXED, ptr::null());
    assert_eq!(s, KcStatus::Ok);
    assert!(last_error().is_none());
    unsafe { kc_report_free(r) };

    unsafe {
        kc_report_free(ptr::null_mut());
        kc_options_free(ptr::null_mut());
        kc_string_free(ptr::null_mut());
        assert_eq!(kc_report_exit_code(ptr::null()), -1);
        assert!(kc_report_json(ptr::null()).is_null());
        let mut v = KcVerdict::Safe;
        assert_eq!(kc_report_verdict(ptr::null(), &mut v), KcStatus::NullArgument);
    }
}

#[test]
fn emits_horn_script() {
    let (t, d) = (c(FIXED), c("drv"));
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { kc_emit_chc(t.as_ptr(), d.as_ptr(), ptr::null(), &mut s) }, KcStatus::Ok);
    let script = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe { kc_string_free(s) };
    assert!(script.contains("(set-logic HORN)"));
    assert!(script.contains("(check-sat)"));
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(kc_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export_and_compiles() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/krefcheck.h")).unwrap();
    let src = std::fs::read_to_string(dir.join("src/lib.rs")).unwrap();
    for line in src.lines().filter(|l| l.contains("extern \"C\" fn ")) {
        let name = line.split("fn ").nth(1).unwrap().split('(').next().unwrap();
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(dir.join("include/krefcheck.h"))
        .status()
    else {
        eprintln!("no C compiler, header syntax not checked");
        return;
    };
    assert!(status.success());
}
