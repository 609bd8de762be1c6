use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use langevin_coupling_ffi::*;

fn last_error() -> String {
    let p = lc_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn schedule_constants_round_trip() {
    let mut s = ptr::null_mut();
    assert_eq!(lc_schedule_new(1.0, 1.0, 1.0, 1.0, 1.0, &mut s), LcStatus::Ok);
    let mut c = LcConstants::default();
    assert_eq!(lc_schedule_constants(s, &mut c), LcStatus::Ok);
    assert!((c.nu - 0.183_939_720_585_721_16).abs() < 1e-15);
    assert!((c.kl_bound - 13.342_048_843_028_857).abs() < 1e-10);
    let mut v = 0.0;
    assert_eq!(lc_schedule_renyi_bound(s, 2.0, &mut v), LcStatus::Ok);
    assert!((v - 89.095_874_265_216_12).abs() < 1e-9);
    assert_eq!(lc_schedule_envelope(s, 1.0, &mut v), LcStatus::Ok);
    assert_eq!(v, 0.0);
    assert_eq!(lc_schedule_renyi_bound(s, 1.0, &mut v), LcStatus::InvalidArgument);
    assert!(last_error().contains('q'));
    assert_eq!(lc_schedule_eta(s, 2.0, &mut v), LcStatus::InvalidArgument);
    unsafe { lc_schedule_free(s) };
}

#[test]
fn invalid_inputs_report_status() {
    let mut s = ptr::null_mut();
    assert_eq!(lc_schedule_new(2.0, 1.0, 1.0, 1.0, 1.0, &mut s), LcStatus::InvalidArgument);
    assert!(s.is_null());
    assert_eq!(lc_schedule_new(1.0, 1.0, 1.0, 1.0, 1.0, ptr::null_mut()), LcStatus::NullPointer);
    assert_eq!(lc_schedule_constants(ptr::null(), ptr::null_mut()), LcStatus::NullPointer);
    let mut v = 0.0;
    assert_eq!(lc_lyapunov_eval(1.0, 2.0, -1.0, &mut v), LcStatus::InvalidArgument);
    assert_eq!(lc_lyapunov_eval(1.0, 2.0, 1.0, &mut v), LcStatus::Ok);
    assert!((v - 0.632_120_558_828_557_7).abs() < 1e-15);
    unsafe {
        lc_schedule_free(ptr::null_mut());
        lc_potential_free(ptr::null_mut());
        lc_simulation_free(ptr::null_mut());
    }
}

#[test]
fn potential_and_certificate() {
    let mut p = ptr::null_mut();
    let name = CString::new("quadratic").unwrap();
    let k = CString::new("kappa").unwrap();
    let names = [k.as_ptr()];
    assert_eq!(
        lc_potential_from_name(name.as_ptr(), 2, names.as_ptr(), [3.0].as_ptr(), 1, &mut p),
        LcStatus::Ok
    );
    let mut g = [0.0; 2];
    assert_eq!(lc_potential_grad(p, [1.0, -2.0].as_ptr(), 2, g.as_mut_ptr()), LcStatus::Ok);
    assert_eq!(g, [3.0, -6.0]);
    let mut r = LcCertificateResult::default();
    assert_eq!(lc_verify_certificate(p, 3.0, 3.0, 1.0, 500, 0.0, 1, &mut r), LcStatus::Ok);
    assert_eq!(r.pass, 1);
    assert_eq!(lc_verify_certificate(p, 4.0, 4.0, 1.0, 500, 0.0, 1, &mut r), LcStatus::Ok);
    assert_eq!(r.pass, 0);
    unsafe { lc_potential_free(p) };

    let bad = CString::new("banana").unwrap();
    let mut q = ptr::null_mut();
    assert_eq!(
        lc_potential_from_name(bad.as_ptr(), 1, ptr::null(), ptr::null(), 0, &mut q),
        LcStatus::InvalidArgument
    );
    assert!(last_error().contains("banana"));
    assert_eq!(lc_potential_double_well(0, &mut q), LcStatus::InvalidArgument);
}

#[test]
fn simulation_handle() {
    let mut p = ptr::null_mut();
    assert_eq!(lc_potential_double_well(1, &mut p), LcStatus::Ok);
    let mut sim = ptr::null_mut();
    let st = lc_simulate(
        p,
        0.5,
        2.0,
        1.6,
        [0.0].as_ptr(),
        [1.0].as_ptr(),
        1,
        1.0,
        1e-3,
        200,
        5,
        100,
        &mut sim,
    );
    assert_eq!(st, LcStatus::Ok);
    let mut n = 0;
    assert_eq!(lc_simulation_grid_len(sim, &mut n), LcStatus::Ok);
    assert_eq!(n, 11);
    let mut grid = vec![0.0; n];
    assert_eq!(lc_simulation_series(sim, LcSeries::Grid, grid.as_mut_ptr(), n), LcStatus::Ok);
    assert_eq!(grid[0], 0.0);
    assert!((grid[n - 1] - 1.0).abs() < 1e-12);
    assert_eq!(
        lc_simulation_series(sim, LcSeries::Envelope, grid.as_mut_ptr(), n - 1),
        LcStatus::DimensionMismatch
    );
    let mut s = LcSimulationSummary::default();
    assert_eq!(lc_simulation_summary(sim, &mut s), LcStatus::Ok);
    assert_eq!(s.n_paths, 200);
    assert!(s.kl_mc > 0.0 && s.kl_mc < s.kl_bound);
    let mut r = LcRenyiEstimate::default();
    assert_eq!(lc_simulation_renyi(sim, 2.0, 50, 1, &mut r), LcStatus::Ok);
    assert!(r.value >= s.kl_mc && r.value <= r.theorem_bound);
    unsafe {
        lc_simulation_free(sim);
        lc_potential_free(p);
    }
}

#[test]
fn dv_slack_through_abi() {
    let mut v = f64::NAN;
    assert_eq!(
        lc_dv_slack([0.7, 0.3].as_ptr(), [0.5, 0.5].as_ptr(), [1.0, -1.0].as_ptr(), 2, &mut v),
        LcStatus::Ok
    );
    assert!((v - 0.116_063_708_988_079_03).abs() < 1e-12);
    assert_eq!(
        lc_dv_slack([1.0, 0.0].as_ptr(), [0.0, 1.0].as_ptr(), [0.0, 0.0].as_ptr(), 2, &mut v),
        LcStatus::InvalidArgument
    );
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let src = r#"
#include "langevin_coupling.h"
int main(void) {
    LcSchedule *s = NULL;
    LcConstants c;
    LcStatus st = lc_schedule_new(1.0, 1.0, 1.0, 1.0, 1.0, &s);
    if (st == LC_STATUS_OK) { lc_schedule_constants(s, &c); lc_schedule_free(s); }
    return lc_last_error_message() == NULL ? 0 : 1;
}
"#;
    let tmp = tempfile::tempdir().unwrap();
    for (file, compiler) in [("probe.c", "cc"), ("probe.cpp", "c++")] {
        let path = tmp.path().join(file);
        std::fs::write(&path, src).unwrap();
        let out = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
            .arg(&dir)
            .arg(&path)
            .output()
            .expect("C compiler available");
        assert!(out.status.success(), "{compiler}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
