use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use dtaigen_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(dtaigen_last_error()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(dtaigen_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn achievement_score_and_errors() {
    let mut out = 0.0;
    let st = unsafe { dtaigen_achievement_score(0.5, 2.0, 1.0, &mut out) };
    assert_eq!(st, DtaigenStatus::Ok);
    assert_eq!(out, -1.0);
    assert_eq!(last_error(), "");

    let st = unsafe { dtaigen_achievement_score(-1.0, 1.0, 1.0, &mut out) };
    assert_eq!(st, DtaigenStatus::Domain);
    assert!(last_error().contains("ratio"));

    let st = unsafe { dtaigen_achievement_score(1.0, 1.0, 1.0, ptr::null_mut()) };
    assert_eq!(st, DtaigenStatus::NullPointer);
}

#[test]
fn targets_and_dtai() {
    let t = [1.0, 1.0];
    let a = [1.0, 1.0];
    let dirs = [0i32, 0];
    let mut h: *mut DtaigenTargets = ptr::null_mut();
    let st = unsafe { dtaigen_targets_new(t.as_ptr(), a.as_ptr(), a.as_ptr(), dirs.as_ptr(), 2, &mut h) };
    assert_eq!(st, DtaigenStatus::Ok);
    assert_eq!(unsafe { dtaigen_targets_count(h) }, 2);

    // both objectives exactly on target: DTAI = 1/2
    let perf = [1.0, 1.0, 2.0, 2.0];
    let mut dtai = [0.0; 2];
    let mut grad = [0.0; 4];
    let st = unsafe { dtaigen_dtai(h, perf.as_ptr(), 2, dtai.as_mut_ptr(), grad.as_mut_ptr()) };
    assert_eq!(st, DtaigenStatus::Ok);
    assert!((dtai[0] - 0.5).abs() < 1e-12);
    let expected = (2.0 + 2.0 * (1.0 - (-1.0f64).exp())) / 4.0;
    assert!((dtai[1] - expected).abs() < 1e-12);
    assert!((grad[0] - 0.25).abs() < 1e-12);

    let st = unsafe { dtaigen_dtai(h, perf.as_ptr(), 2, dtai.as_mut_ptr(), ptr::null_mut()) };
    assert_eq!(st, DtaigenStatus::Ok);

    let mut r = [0.0; 4];
    unsafe { dtaigen_target_ratios(h, perf.as_ptr(), 2, r.as_mut_ptr()) };
    assert_eq!(r, perf);

    let bad = [2i32, 0];
    let mut h2: *mut DtaigenTargets = ptr::null_mut();
    let st = unsafe { dtaigen_targets_new(t.as_ptr(), a.as_ptr(), a.as_ptr(), bad.as_ptr(), 2, &mut h2) };
    assert_eq!(st, DtaigenStatus::Parameter);
    assert!(h2.is_null());

    unsafe {
        dtaigen_targets_free(h);
        dtaigen_targets_free(ptr::null_mut());
    }
}

#[test]
fn dpp_two_by_two() {
    // S_12 = 0.5; gamma 0 ignores the qualities
    let sigma = 1.0 / (2.0 * 2f64.ln()).sqrt();
    let x = [0.0, 1.0];
    let q = [0.5, 0.5];
    let mut loss = 0.0;
    let mut gx = [0.0; 2];
    let st = unsafe {
        dtaigen_dpp_loss(x.as_ptr(), 2, 1, q.as_ptr(), sigma, 0.0, 1e-12, &mut loss, gx.as_mut_ptr(), ptr::null_mut())
    };
    assert_eq!(st, DtaigenStatus::Ok);
    assert!((loss + 0.5 * 0.75f64.ln()).abs() < 1e-9);
    // spreading the pair lowers the loss
    assert!(gx[0] > 0.0 && gx[1] < 0.0);
}

#[test]
fn hypervolume_exact_and_sampled() {
    let pts = [1.0, 2.0, 2.0, 1.0];
    let zero = [0.0, 0.0];
    let mut hv = 0.0;
    assert_eq!(
        unsafe { dtaigen_hypervolume_exact(pts.as_ptr(), 2, 2, zero.as_ptr(), &mut hv) },
        DtaigenStatus::Ok
    );
    assert_eq!(hv, 3.0);
    let bound = [2.0, 2.0];
    let mut mc = 0.0;
    assert_eq!(
        unsafe { dtaigen_hypervolume_monte_carlo(pts.as_ptr(), 2, 2, zero.as_ptr(), bound.as_ptr(), 200_000, 7, &mut mc) },
        DtaigenStatus::Ok
    );
    assert!((mc - 3.0).abs() < 0.05);
    let st = unsafe { dtaigen_hypervolume_monte_carlo(pts.as_ptr(), 2, 2, zero.as_ptr(), zero.as_ptr(), 10, 7, &mut mc) };
    assert_eq!(st, DtaigenStatus::Config);
}

#[test]
fn ring8_oracle() {
    let x = [0.5; 8];
    let mut p = [0.0; 3];
    let mut feasible = false;
    assert_eq!(unsafe { dtaigen_ring8_eval(x.as_ptr(), p.as_mut_ptr(), &mut feasible) }, DtaigenStatus::Ok);
    assert!(feasible);
    assert!(p.iter().all(|v| *v > 0.0));
    let out_of_box = [1.5; 8];
    assert_eq!(
        unsafe { dtaigen_ring8_eval(out_of_box.as_ptr(), p.as_mut_ptr(), &mut feasible) },
        DtaigenStatus::Domain
    );
}

#[test]
fn dataset_targets_and_evaluation() {
    let problem = CString::new("ring8").unwrap();
    let mut data: *mut DtaigenDataset = ptr::null_mut();
    assert_eq!(unsafe { dtaigen_dataset_synthetic(problem.as_ptr(), 300, 3, &mut data) }, DtaigenStatus::Ok);
    let (rows, width, objectives) = unsafe {
        (dtaigen_dataset_rows(data), dtaigen_dataset_width(data), dtaigen_dataset_objectives(data))
    };
    assert_eq!((rows, width, objectives), (300, 8, 3));

    let mut designs = vec![0.0; rows * width];
    assert_eq!(unsafe { dtaigen_dataset_designs(data, designs.as_mut_ptr()) }, DtaigenStatus::Ok);

    let ones = [1.0; 3];
    let mut targets: *mut DtaigenTargets = ptr::null_mut();
    assert_eq!(
        unsafe { dtaigen_dataset_targets(data, 75.0, ones.as_ptr(), ones.as_ptr(), &mut targets) },
        DtaigenStatus::Ok
    );

    // evaluating the dataset's own rows: every design has novelty 0
    let mut m = DtaigenMetrics::default();
    let st = unsafe { dtaigen_evaluate(data, targets, designs.as_ptr(), 50, problem.as_ptr(), &mut m) };
    assert_eq!(st, DtaigenStatus::Ok, "{}", last_error());
    assert_eq!(m.mean_novelty, 0.0);
    assert!((0.0..=1.0).contains(&m.feasibility_rate));
    assert!(m.mean_dtai > 0.0 && m.mean_dtai < 1.0);

    let unknown = CString::new("ring9").unwrap();
    let st = unsafe { dtaigen_evaluate(data, targets, designs.as_ptr(), 50, unknown.as_ptr(), &mut m) };
    assert_ne!(st, DtaigenStatus::Ok);
    assert!(last_error().contains("ring9"));

    unsafe {
        dtaigen_targets_free(targets);
        dtaigen_dataset_free(data);
    }
}

#[test]
fn null_handles_are_reported() {
    assert_eq!(unsafe { dtaigen_dataset_rows(ptr::null()) }, 0);
    assert_eq!(unsafe { dtaigen_generator_width(ptr::null()) }, 0);
    let mut out = [0.0; 4];
    assert_eq!(
        unsafe { dtaigen_generator_sample(ptr::null(), 1, 0, true, out.as_mut_ptr()) },
        DtaigenStatus::NullPointer
    );
    let bad = [0xffu8, 0];
    let mut data: *mut DtaigenDataset = ptr::null_mut();
    assert_eq!(
        unsafe { dtaigen_dataset_synthetic(bad.as_ptr().cast(), 300, 0, &mut data) },
        DtaigenStatus::InvalidString
    );
}

#[test]
fn missing_generator_file_is_io_error() {
    let path = CString::new("/nonexistent/generator.json").unwrap();
    let mut g: *mut DtaigenGenerator = ptr::null_mut();
    assert_eq!(unsafe { dtaigen_generator_load(path.as_ptr(), &mut g) }, DtaigenStatus::Io);
    assert!(g.is_null());
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/dtaigen.h")
}

#[test]
fn header_declares_the_api() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "dtaigen_version",
        "dtaigen_last_error",
        "dtaigen_targets_new",
        "dtaigen_dtai",
        "dtaigen_dpp_loss",
        "dtaigen_hypervolume_exact",
        "dtaigen_dataset_load",
        "dtaigen_generator_sample",
        "dtaigen_evaluate",
        "typedef struct DtaigenDataset DtaigenDataset",
        "DTAIGEN_STATUS_OK = 0",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(status) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(header())
        .status()
    else {
        eprintln!("no C compiler; skipped");
        return;
    };
    assert!(status.success());
}
