use std::ffi::{CStr, CString};
use std::ptr;

use conekit_ffi::*;

fn last_error() -> String {
    let p = conekit_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { conekit_string_free(p) };
    s
}

#[test]
fn config_round_trip() {
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { conekit_config_default(&mut cfg) }, ConekitStatus::Ok);
    let mut toml = ptr::null_mut();
    assert_eq!(unsafe { conekit_config_to_toml(cfg, &mut toml) }, ConekitStatus::Ok);
    let text = CString::new(take_string(toml)).unwrap();
    let mut again = ptr::null_mut();
    assert_eq!(unsafe { conekit_config_from_toml(text.as_ptr(), &mut again) }, ConekitStatus::Ok);
    unsafe {
        conekit_config_free(cfg);
        conekit_config_free(again);
    }
}

#[test]
fn bad_config_reports_error() {
    let text = CString::new("seed = \"not a number\"").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { conekit_config_from_toml(text.as_ptr(), &mut cfg) }, ConekitStatus::Config);
    assert!(cfg.is_null());
    assert!(!last_error().is_empty());

    let empty = CString::new("").unwrap();
    assert_eq!(unsafe { conekit_config_from_toml(empty.as_ptr(), &mut cfg) }, ConekitStatus::Config);
    assert!(last_error().contains("usage"));
}

#[test]
fn unknown_check_rejected() {
    let mut cfg = ptr::null_mut();
    unsafe { conekit_config_default(&mut cfg) };
    let names = CString::new("flattening, no_such_check").unwrap();
    assert_eq!(unsafe { conekit_config_select_checks(cfg, names.as_ptr()) }, ConekitStatus::Config);
    assert!(last_error().contains("no_such_check"));
    unsafe { conekit_config_free(cfg) };
}

#[test]
fn null_pointers() {
    assert_eq!(unsafe { conekit_config_default(ptr::null_mut()) }, ConekitStatus::NullPointer);
    assert_eq!(unsafe { conekit_run(ptr::null(), ptr::null_mut()) }, ConekitStatus::NullPointer);
    assert_eq!(unsafe { conekit_phi(0.5, 0.1, 0.5, ptr::null_mut()) }, ConekitStatus::NullPointer);
    assert_eq!(unsafe { conekit_report_all_pass(ptr::null()) }, 0);
    assert_eq!(unsafe { conekit_report_check_count(ptr::null()) }, 0);
    unsafe {
        conekit_config_free(ptr::null_mut());
        conekit_report_free(ptr::null_mut());
        conekit_string_free(ptr::null_mut());
    }
}

#[test]
fn run_selected_checks() {
    let mut cfg = ptr::null_mut();
    unsafe { conekit_config_default(&mut cfg) };
    let names = CString::new("flattening,phase_lemma").unwrap();
    assert_eq!(unsafe { conekit_config_select_checks(cfg, names.as_ptr()) }, ConekitStatus::Ok);
    let mut rep = ptr::null_mut();
    assert_eq!(unsafe { conekit_run(cfg, &mut rep) }, ConekitStatus::Ok);
    assert_eq!(unsafe { conekit_report_all_pass(rep) }, 1);
    assert_eq!(unsafe { conekit_report_check_count(rep) }, 2);

    let (mut status, mut criterion) = (ConekitCheckStatus::Error, 0u32);
    assert_eq!(unsafe { conekit_report_check(rep, 1, &mut status, &mut criterion) }, ConekitStatus::Ok);
    assert_eq!((status, criterion), (ConekitCheckStatus::Pass, 3));
    let mut name = ptr::null_mut();
    assert_eq!(unsafe { conekit_report_check_name(rep, 0, &mut name) }, ConekitStatus::Ok);
    assert_eq!(take_string(name), "flattening");
    assert_eq!(unsafe { conekit_report_check(rep, 2, &mut status, &mut criterion) }, ConekitStatus::OutOfRange);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { conekit_report_to_json(rep, &mut json) }, ConekitStatus::Ok);
    assert!(take_string(json).contains("\"all_pass\": true"));

    let dir = tempfile::tempdir().unwrap();
    let d = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { conekit_report_write(rep, d.as_ptr()) }, ConekitStatus::Ok);
    assert!(dir.path().join("report.json").exists());
    assert!(dir.path().join("plots/checks.csv").exists());
    unsafe {
        conekit_report_free(rep);
        conekit_config_free(cfg);
    }
}

#[test]
fn point_functions() {
    let (mut re, mut im) = (0.0, 0.0);
    assert_eq!(unsafe { conekit_chart_psi(0.5, 1, 0.25, 0.0, &mut re, &mut im) }, ConekitStatus::Ok);
    let z = (re * re + im * im).sqrt();
    // |z| = |w|^{1/β} on every chart.
    assert!((z - 0.0625).abs() < 1e-14, "{z}");
    assert_eq!(unsafe { conekit_chart_psi(1.5, 1, 0.25, 0.0, &mut re, &mut im) }, ConekitStatus::Domain);

    let mut v = 0.0;
    assert_eq!(unsafe { conekit_phi(0.0, 0.3, 0.5, &mut v) }, ConekitStatus::Ok);
    assert!(v.is_finite());

    assert_eq!(unsafe { conekit_m_eta(5.0, -1.0, 0.5, &mut v) }, ConekitStatus::Ok);
    assert!((v - 5.0).abs() < 1e-12, "{v}");
    assert_eq!(unsafe { conekit_m_eta(1.0, 0.0, -1.0, &mut v) }, ConekitStatus::Domain);
}

#[test]
fn header_declares_exports() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/conekit.h")).unwrap();
    for sym in [
        "conekit_last_error",
        "conekit_string_free",
        "conekit_config_default",
        "conekit_config_from_toml",
        "conekit_config_select_checks",
        "conekit_config_to_toml",
        "conekit_config_free",
        "conekit_run",
        "conekit_report_all_pass",
        "conekit_report_check_count",
        "conekit_report_check",
        "conekit_report_check_name",
        "conekit_report_to_json",
        "conekit_report_write",
        "conekit_report_free",
        "conekit_chart_psi",
        "conekit_phi",
        "conekit_m_eta",
        "typedef struct ConekitConfig ConekitConfig",
        "CONEKIT_STATUS_PANIC = 8",
    ] {
        assert!(header.contains(sym), "missing {sym}");
    }
}
