use std::ffi::{c_char, CString};
use std::ptr;

use dalmc_ffi::*;

const CONFIG: &str = r#"
[target]
kind = "gaussian"
mean = [3.0]
variance = 4.0

[base]
kind = "gaussian"
sigma = 1.0

[schedule]
family = "cosine"
phi = 1.0
horizon = 1.0
"#;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { dalmc_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn build(text: &str) -> (DalmcStatus, *mut DalmcPath) {
    let c = CString::new(text).unwrap();
    let mut p = ptr::null_mut();
    let status = unsafe { dalmc_path_from_toml(c.as_ptr(), &mut p) };
    (status, p)
}

#[test]
fn path_round_trip() {
    let (status, path) = build(CONFIG);
    assert_eq!(status, DalmcStatus::Ok);
    unsafe {
        let mut d = 0usize;
        assert_eq!(dalmc_path_dim(path, &mut d), DalmcStatus::Ok);
        assert_eq!(d, 1);

        let mut lambda = 0.0;
        assert_eq!(dalmc_path_lambda(path, 0.5, &mut lambda), DalmcStatus::Ok);
        assert!((lambda - 0.5).abs() < 1e-12);

        // μ at λ = 1/2 is N(3/√2, 5/2)
        let x = [1.0];
        let mut score = [0.0];
        assert_eq!(dalmc_path_score(path, 0.5, x.as_ptr(), 1, score.as_mut_ptr()), DalmcStatus::Ok);
        let expected = -(1.0 - 3.0 / 2f64.sqrt()) / 2.5;
        assert!((score[0] - expected).abs() < 1e-10, "{}", score[0]);

        let mut lp = 0.0;
        assert_eq!(dalmc_path_log_density(path, 0.5, x.as_ptr(), 1, &mut lp), DalmcStatus::Ok);
        let oracle = -0.5 * (1.0 - 3.0 / 2f64.sqrt()).powi(2) / 2.5 - 0.5 * (2.0 * std::f64::consts::PI * 2.5).ln();
        assert!((lp - oracle).abs() < 1e-10);

        let mut l = 0.0;
        assert_eq!(dalmc_lipschitz_bound(path, 0.0, &mut l), DalmcStatus::Ok);
        assert_eq!(l, 1.0);

        let mut a = 0.0;
        assert_eq!(dalmc_action_bound(path, &mut a), DalmcStatus::Ok);
        assert!(a.is_finite() && a > 0.0);

        dalmc_path_free(path);
    }
}

#[test]
fn sampler_run_exposes_final_states() {
    let (_, path) = build(CONFIG);
    unsafe {
        let mut run = ptr::null_mut();
        assert_eq!(dalmc_run(path, 0.1, 200, 64, 9, &mut run), DalmcStatus::Ok);
        let (mut chains, mut dim, mut flagged) = (0usize, 0usize, 99usize);
        assert_eq!(dalmc_run_shape(run, &mut chains, &mut dim, &mut flagged), DalmcStatus::Ok);
        assert_eq!((chains, dim, flagged), (64, 1, 0));

        let mut small = vec![0.0; 10];
        assert_eq!(dalmc_run_samples(run, small.as_mut_ptr(), small.len()), DalmcStatus::BufferTooSmall);
        let mut buf = vec![f64::NAN; 64];
        assert_eq!(dalmc_run_samples(run, buf.as_mut_ptr(), buf.len()), DalmcStatus::Ok);
        assert!(buf.iter().all(|v| v.is_finite()));

        dalmc_run_free(run);
        dalmc_path_free(path);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let (status, path) = build(&CONFIG.replace("variance = 4.0", "varance = 4.0"));
    assert_eq!(status, DalmcStatus::Config);
    assert!(path.is_null());
    assert!(last_error().contains("target"), "{}", last_error());

    let (_, path) = build(CONFIG);
    unsafe {
        let x = [0.0, 0.0];
        let mut out = [0.0; 2];
        assert_eq!(
            dalmc_path_score(path, 0.5, x.as_ptr(), 2, out.as_mut_ptr()),
            DalmcStatus::DimensionMismatch
        );
        let mut v = 0.0;
        assert_eq!(dalmc_path_lambda(path, 2.0, &mut v), DalmcStatus::InvalidParameter);
        assert_eq!(dalmc_path_lambda(ptr::null(), 0.5, &mut v), DalmcStatus::NullPointer);
        assert_eq!(dalmc_path_lambda(path, 0.5, ptr::null_mut()), DalmcStatus::NullPointer);
        dalmc_path_free(path);
        dalmc_path_free(ptr::null_mut());
        assert_eq!(dalmc_path_from_toml(ptr::null(), &mut ptr::null_mut()), DalmcStatus::NullPointer);
    }
}

#[test]
fn planner_matches_library() {
    let (mut kappa, mut steps) = (0.0, 0u64);
    let status = unsafe { dalmc_plan_gaussian(0.5, 2, 2.0, 3.0, &mut kappa, &mut steps) };
    assert_eq!(status, DalmcStatus::Ok);
    // κ = ε²/max(M₂, d), M = ⌈d·max(M₂, d)²·L²/ε⁶⌉
    assert!((kappa - 0.125).abs() < 1e-15);
    assert_eq!(steps, (2.0f64 * 4.0 * 9.0 / 0.5f64.powi(6)).ceil() as u64);
    let status = unsafe { dalmc_plan_gaussian(-1.0, 2, 2.0, 3.0, &mut kappa, &mut steps) };
    assert_eq!(status, DalmcStatus::InvalidParameter);
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/dalmc.h")).unwrap();
    for f in [
        "dalmc_last_error",
        "dalmc_path_from_toml",
        "dalmc_path_free",
        "dalmc_path_dim",
        "dalmc_path_lambda",
        "dalmc_path_log_density",
        "dalmc_path_score",
        "dalmc_lipschitz_bound",
        "dalmc_action_bound",
        "dalmc_run(",
        "dalmc_run_free",
        "dalmc_run_shape",
        "dalmc_run_samples",
        "dalmc_plan_gaussian",
        "typedef struct DalmcPath DalmcPath",
        "DALMC_STATUS_OK = 0",
    ] {
        assert!(header.contains(f), "missing {f}");
    }
}
