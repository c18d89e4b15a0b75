use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use adaptmc_ffi::*;

const SMOKE: &str = r#"
[target]
kind = "gaussian"
mean = [1.0, -1.0]
cov = [[2.0, 0.8], [0.8, 1.0]]

[algorithm]
kind = "nsrwm"

[run]
steps = 2000
seed = 9
"#;

fn last_error() -> Option<String> {
    let p = amc_last_error_message();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

fn parse(text: &str) -> (AmcStatus, *mut AmcConfig) {
    let c = CString::new(text).unwrap();
    let mut cfg = ptr::null_mut();
    let status = unsafe { amc_config_parse(c.as_ptr(), &mut cfg) };
    (status, cfg)
}

fn run(cfg: *const AmcConfig, replicate: u64) -> *mut AmcTrace {
    let mut trace = ptr::null_mut();
    assert_eq!(unsafe { amc_run_chain(cfg, replicate, &mut trace) }, AmcStatus::Ok);
    assert!(last_error().is_none());
    trace
}

fn samples(trace: *const AmcTrace) -> Vec<f64> {
    unsafe {
        let n = amc_trace_len(trace) as usize * amc_trace_dim(trace);
        let mut buf = vec![0.0; n];
        assert_eq!(amc_trace_copy_samples(trace, buf.as_mut_ptr(), buf.len()), AmcStatus::Ok);
        buf
    }
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(amc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn run_chain_round_trip() {
    let (status, cfg) = parse(SMOKE);
    assert_eq!(status, AmcStatus::Ok);
    let trace = run(cfg, 0);
    unsafe {
        assert_eq!(amc_trace_len(trace), 2000);
        assert_eq!(amc_trace_dim(trace), 2);
        let rate = amc_trace_acceptance_rate(trace);
        assert!(rate > 0.0 && rate < 1.0);
        assert_eq!(amc_trace_reinit_count(trace), 0);
        assert_eq!(amc_trace_final_kappa(trace), 0);

        let mut needed = 0usize;
        let mut small = [0.0; 2];
        let st = amc_trace_copy_final_theta(trace, small.as_mut_ptr(), small.len(), &mut needed);
        assert_eq!(st, AmcStatus::BufferTooSmall);
        assert!(last_error().unwrap().contains("required"));
        let mut theta = vec![0.0; needed];
        assert_eq!(amc_trace_copy_final_theta(trace, theta.as_mut_ptr(), needed, ptr::null_mut()), AmcStatus::Ok);
        assert!(theta.iter().all(|v| v.is_finite()));
    }
    let a = samples(trace);
    let again = run(cfg, 0);
    assert_eq!(a, samples(again));
    let other = run(cfg, 1);
    assert_ne!(a, samples(other));
    unsafe {
        amc_trace_free(trace);
        amc_trace_free(again);
        amc_trace_free(other);
        amc_config_free(cfg);
    }
}

#[test]
fn overrides_revalidate() {
    let (_, cfg) = parse(SMOKE);
    unsafe {
        assert_eq!(amc_config_set_steps(cfg, 300), AmcStatus::Ok);
        assert_eq!(amc_config_set_seed(cfg, 4), AmcStatus::Ok);
        let trace = run(cfg, 0);
        assert_eq!(amc_trace_len(trace), 300);
        amc_trace_free(trace);
        amc_config_free(cfg);
    }
}

#[test]
fn config_errors_are_reported() {
    let (status, cfg) = parse(&SMOKE.replace("[run]", "[schedule]\nalpha = 0.3\n[run]"));
    assert_eq!(status, AmcStatus::Config);
    assert!(cfg.is_null());
    let msg = last_error().unwrap();
    assert!(msg.contains("schedule.alpha"), "{msg}");

    let (status, _) = parse("not toml [");
    assert_eq!(status, AmcStatus::Config);

    let bytes = [0xffu8, 0xfe, 0];
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { amc_config_parse(bytes.as_ptr().cast(), &mut out) }, AmcStatus::InvalidUtf8);

    let missing = CString::new("/nonexistent/config.toml").unwrap();
    assert_eq!(unsafe { amc_config_load(missing.as_ptr(), &mut out) }, AmcStatus::Io);
}

#[test]
fn null_arguments_are_rejected() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(amc_config_parse(ptr::null(), &mut out), AmcStatus::NullPointer);
        let text = CString::new(SMOKE).unwrap();
        assert_eq!(amc_config_parse(text.as_ptr(), ptr::null_mut()), AmcStatus::NullPointer);
        let mut trace = ptr::null_mut();
        assert_eq!(amc_run_chain(ptr::null(), 0, &mut trace), AmcStatus::NullPointer);
        assert_eq!(amc_trace_copy_samples(ptr::null(), ptr::null_mut(), 0), AmcStatus::NullPointer);
        assert_eq!(amc_trace_len(ptr::null()), 0);
        assert!(amc_trace_acceptance_rate(ptr::null()).is_nan());
        assert_eq!(amc_two_state_oracle(0.3, 0.6, ptr::null_mut()), AmcStatus::NullPointer);
        amc_trace_free(ptr::null_mut());
        amc_config_free(ptr::null_mut());
    }
}

#[test]
fn trace_csv_and_experiment_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = parse(SMOKE);
    let trace = run(cfg, 0);
    let csv = dir.path().join("trace.csv");
    let c_csv = CString::new(csv.to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(amc_trace_write_csv(trace, c_csv.as_ptr()), AmcStatus::Ok);
        let text = std::fs::read_to_string(&csv).unwrap();
        assert!(text.starts_with("k,x_1,x_2,accepted,log_accept,kappa,nu,reinit\n"));
        assert_eq!(text.lines().count(), 2001);

        let out = CString::new(dir.path().join("exp").to_str().unwrap()).unwrap();
        assert_eq!(amc_run_experiment(cfg, out.as_ptr()), AmcStatus::Ok);
        let names: Vec<String> = std::fs::read_dir(dir.path().join("exp"))
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        assert!(names.iter().any(|n| n.ends_with("-manifest.json")), "{names:?}");

        let blocker = CString::new(csv.join("sub").to_str().unwrap()).unwrap();
        assert_eq!(amc_run_experiment(cfg, blocker.as_ptr()), AmcStatus::Io);
        amc_trace_free(trace);
        amc_config_free(cfg);
    }
}

#[test]
fn required_check_failure_is_distinguished() {
    let text = r#"
[target]
kind = "gaussian"
mean = [0.0]
cov = [[1.0]]

[algorithm]
kind = "nsrwm"
x0 = [40.0]
mu0 = [40.0]

[run]
steps = 300
replicates = 100

[diagnostics.clt]
function = "x1"
required = true
"#;
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = parse(text);
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(amc_run_experiment(cfg, out.as_ptr()), AmcStatus::DiagnosticFailed);
        assert!(last_error().unwrap().contains("clt:x1"));
        amc_config_free(cfg);
    }
}

#[test]
fn two_state_oracle_values() {
    let mut out = [0.0; 2];
    unsafe {
        assert_eq!(amc_two_state_oracle(0.3, 0.6, out.as_mut_ptr()), AmcStatus::Ok);
        assert!((out[0] - 2.0 / 3.0).abs() < 1e-15 && (out[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(amc_two_state_oracle(0.0, 0.6, out.as_mut_ptr()), AmcStatus::InvalidArgument);
    }
}

#[test]
fn header_declares_the_api_and_compiles_as_c() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = std::fs::read_to_string(include.join("adaptmc.h")).unwrap();
    for name in [
        "amc_version",
        "amc_last_error_message",
        "amc_config_parse",
        "amc_config_load",
        "amc_config_free",
        "amc_run_chain",
        "amc_run_experiment",
        "amc_trace_copy_samples",
        "amc_trace_write_csv",
        "amc_trace_free",
        "amc_two_state_oracle",
        "AMC_STATUS_BUFFER_TOO_SMALL",
        "typedef struct AmcTrace AmcTrace",
    ] {
        assert!(header.contains(name), "{name}");
    }

    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        r#"#include "adaptmc.h"
int use(const char *text) {
    AmcConfig *cfg = NULL;
    AmcTrace *trace = NULL;
    if (amc_config_parse(text, &cfg) != AMC_STATUS_OK) return 1;
    if (amc_run_chain(cfg, 0, &trace) != AMC_STATUS_OK) return 2;
    double buf[16];
    size_t need = 0;
    amc_trace_copy_final_theta(trace, buf, 16, &need);
    amc_trace_free(trace);
    amc_config_free(cfg);
    return (int)need;
}
"#,
    )
    .unwrap();
    let status = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

fn which_cc() -> Result<String, ()> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    Command::new(&cc).arg("--version").output().map(|_| cc).map_err(|_| ())
}
