use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use cwhom_ffi::*;

fn last_error() -> String {
    let p = cwhom_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

const LOR: CwhomLineshape = CwhomLineshape { kind: CwhomLineshapeKind::Lorentzian, width: 2.2e6, mod_rate: 0.0, deviation: 0.0 };
const RECT: CwhomLineshape = CwhomLineshape { kind: CwhomLineshapeKind::Rectangular, width: 5.2e6, mod_rate: 0.0, deviation: 0.0 };

#[test]
fn g1_and_errors() {
    let mut v = 0.0;
    assert_eq!(unsafe { cwhom_g1(&LOR, 100e-9, &mut v) }, CwhomStatus::Ok);
    assert!((v - 0.5009).abs() < 1e-3);
    let fast = CwhomLineshape { kind: CwhomLineshapeKind::FmTriangle, width: 1e6, mod_rate: 100e3, deviation: 4e6 };
    assert_eq!(unsafe { cwhom_g1(&fast, 1e-7, &mut v) }, CwhomStatus::InvalidArgument);
    assert!(last_error().contains("adiabatic"));
    assert_eq!(unsafe { cwhom_g1(ptr::null(), 0.0, &mut v) }, CwhomStatus::NullPointer);
    assert!(last_error().contains("lineshape"));
}

#[test]
fn fringe_model_handle() {
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { cwhom_fringe_model_new(0.5, &RECT, &LOR, 0.0, true, &mut model) }, CwhomStatus::Ok);
    let mut p = 0.0;
    assert_eq!(unsafe { cwhom_fringe_model_eval(model, 0.0, &mut p) }, CwhomStatus::Ok);
    assert!((p - 0.5).abs() < 1e-12);
    unsafe { cwhom_fringe_model_free(model) };

    let mut bad = ptr::null_mut();
    assert_eq!(unsafe { cwhom_fringe_model_new(0.7, &RECT, &LOR, 0.0, true, &mut bad) }, CwhomStatus::InvalidArgument);
    assert!(bad.is_null());
    unsafe { cwhom_fringe_model_free(ptr::null_mut()) };
}

#[test]
fn correlate_copy_and_fit() {
    // flat background: exercises the plumbing only
    let a: Vec<u64> = (0..200_000u64).map(|i| i * 1_000_003).collect();
    let b: Vec<u64> = (0..200_000u64).map(|i| i * 999_983 + 17).collect();
    let mut hist = ptr::null_mut();
    let status = unsafe { cwhom_correlate(a.as_ptr(), a.len(), b.as_ptr(), b.len(), 500, 2_000_000, &mut hist) };
    assert_eq!(status, CwhomStatus::Ok);
    let n = unsafe { cwhom_histogram_bins(hist) };
    assert_eq!(n, 8001);
    let mut counts = vec![0u64; n];
    let mut centers = vec![0f64; n];
    assert_eq!(unsafe { cwhom_histogram_copy(hist, counts.as_mut_ptr(), centers.as_mut_ptr(), n) }, CwhomStatus::Ok);
    assert!((centers[4000]).abs() < 1e-15);
    assert!(counts.iter().sum::<u64>() > 0);
    assert_eq!(unsafe { cwhom_histogram_copy(hist, counts.as_mut_ptr(), ptr::null_mut(), 10) }, CwhomStatus::BufferTooSmall);

    let mut fit = ptr::null_mut();
    let status = unsafe { cwhom_fit_effective_lorentzian(hist, true, &mut fit) };
    // a fringe without a dip cannot identify the width or the beat
    assert_ne!(status, CwhomStatus::Ok);
    assert!(fit.is_null());
    unsafe { cwhom_histogram_free(hist) };

    let unsorted = [5u64, 3];
    let mut h2 = ptr::null_mut();
    assert_eq!(unsafe { cwhom_correlate(unsorted.as_ptr(), 2, b.as_ptr(), 1, 500, 2_000_000, &mut h2) }, CwhomStatus::InvalidArgument);
    assert!(last_error().contains("channel A"));
    assert_eq!(unsafe { cwhom_correlate(a.as_ptr(), 1, b.as_ptr(), 1, 300, 1000, &mut h2) }, CwhomStatus::Config);
}

#[test]
fn simulate_correlate_fit_round_trip() {
    let config = CString::new(
        r#"
[experiment]
mode_overlap = 1.0
duration = 0.05
[experiment.source_1]
detuning = 0.0
mean_rate = 5e5
rng_seed = 11
lineshape = { kind = "lorentzian", fwhm = 2.2e6 }
[experiment.source_2]
detuning = 0.0
mean_rate = 5e5
rng_seed = 12
lineshape = { kind = "lorentzian", fwhm = 2.2e6 }
"#,
    )
    .unwrap();
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { cwhom_run_new(config.as_ptr(), &mut run) }, CwhomStatus::Ok);
    assert!((unsafe { cwhom_run_duration(run) } - 0.05).abs() < 1e-12);
    let na = unsafe { cwhom_run_event_count(run, 0) };
    let nb = unsafe { cwhom_run_event_count(run, 1) };
    assert!(na > 20_000 && nb > 20_000, "{na} {nb}");
    assert_eq!(unsafe { cwhom_run_event_count(run, 7) }, 0);
    let mut a = vec![0u64; na];
    let mut b = vec![0u64; nb];
    assert_eq!(unsafe { cwhom_run_copy_events(run, 0, a.as_mut_ptr(), na) }, CwhomStatus::Ok);
    assert_eq!(unsafe { cwhom_run_copy_events(run, 1, b.as_mut_ptr(), nb) }, CwhomStatus::Ok);
    assert_eq!(unsafe { cwhom_run_copy_events(run, 1, b.as_mut_ptr(), 1) }, CwhomStatus::BufferTooSmall);
    unsafe { cwhom_run_free(run) };

    let mut hist = ptr::null_mut();
    assert_eq!(unsafe { cwhom_correlate(a.as_ptr(), na, b.as_ptr(), nb, 2000, 2_000_000, &mut hist) }, CwhomStatus::Ok);
    let mut fit = ptr::null_mut();
    assert_eq!(unsafe { cwhom_fit_physical(hist, &LOR, &LOR, false, &mut fit) }, CwhomStatus::Ok, "{}", last_error());
    let (mut v, mut s) = (0.0, 0.0);
    let name = CString::new("visibility").unwrap();
    assert_eq!(unsafe { cwhom_fit_parameter(fit, name.as_ptr(), &mut v, &mut s) }, CwhomStatus::Ok);
    assert!((v - 0.49).abs() < 5.0 * s + 0.01, "V = {v} +/- {s}");
    let missing = CString::new("tau_c").unwrap();
    assert_eq!(unsafe { cwhom_fit_parameter(fit, missing.as_ptr(), &mut v, &mut s) }, CwhomStatus::InvalidArgument);
    assert!(unsafe { cwhom_fit_reduced_chi2(fit) } < 2.0);
    unsafe {
        cwhom_fit_free(fit);
        cwhom_histogram_free(hist);
    }
}

#[test]
fn bad_config_and_preset() {
    let mut run = ptr::null_mut();
    let text = CString::new("[experiment]\nbogus = 1\n").unwrap();
    assert_eq!(unsafe { cwhom_run_new(text.as_ptr(), &mut run) }, CwhomStatus::Config);
    let name = CString::new("fig9").unwrap();
    let dir = CString::new(std::env::temp_dir().join("cwhom-ffi-none").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { cwhom_preset_run(name.as_ptr(), 0, 0.0, dir.as_ptr()) }, CwhomStatus::Config);
    assert!(last_error().contains("unknown preset"));
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(cwhom_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_api_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/cwhom.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for symbol in [
        "cwhom_last_error",
        "cwhom_version",
        "cwhom_g1",
        "cwhom_fringe_model_new",
        "cwhom_fringe_model_eval",
        "cwhom_fringe_model_free",
        "cwhom_run_new",
        "cwhom_run_copy_events",
        "cwhom_run_free",
        "cwhom_correlate",
        "cwhom_histogram_copy",
        "cwhom_histogram_free",
        "cwhom_fit_effective_lorentzian",
        "cwhom_fit_physical",
        "cwhom_fit_parameter",
        "cwhom_fit_free",
        "cwhom_preset_run",
        "typedef struct CwhomRun CwhomRun;",
        "CWHOM_STATUS_NO_CONVERGENCE = 4",
    ] {
        assert!(text.contains(symbol), "header lacks {symbol}");
    }
    // syntax-check the header as C when a compiler is available
    if let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-x", "c", "-std=c99"]).arg(&header).output() {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
