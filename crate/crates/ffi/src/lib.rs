//! C ABI over `adaptmc`.
//!
//! Configs and traces are opaque heap handles created by `amc_*` constructors
//! and released with the matching `*_free`. Every fallible call returns an
//! [`AmcStatus`]; on failure [`amc_last_error_message`] describes the error for
//! the calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use adaptmc::config::{parse_config, ExperimentConfig};
use adaptmc::controller::{RunTrace, TraceOptions};
use adaptmc::diagnostics::two_state_oracle;
use adaptmc::experiment::{run_experiment, write_trace_csv, ExperimentError, Overrides, Sampler};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// The config failed to parse or validate.
    Config = 3,
    /// A model could not be built from a valid config.
    Model = 4,
    Io = 5,
    InvalidArgument = 6,
    /// The output buffer is shorter than required.
    BufferTooSmall = 7,
    /// The run finished but a required diagnostic failed.
    DiagnosticFailed = 8,
    Panic = 9,
}

/// Parsed and validated experiment config.
pub struct AmcConfig {
    inner: ExperimentConfig,
}

/// Trace of one chain replicate.
pub struct AmcTrace {
    inner: RunTrace,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(AmcStatus, String);

impl Failure {
    fn new(status: AmcStatus, message: impl Into<String>) -> Self {
        Self(status, message.into())
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        let status = match e {
            ExperimentError::Config(_) => AmcStatus::Config,
            ExperimentError::Model(_) => AmcStatus::Model,
            ExperimentError::Io { .. } => AmcStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn config_errors(errs: Vec<adaptmc::config::ConfigError>) -> Failure {
    let text = errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ");
    Failure(AmcStatus::Config, text)
}

/// Runs `f`, converting errors and panics into a status and the thread's
/// last-error message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AmcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_error();
            AmcStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            AmcStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(AmcStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::new(AmcStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::new(AmcStatus::NullPointer, format!("{name} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::new(AmcStatus::NullPointer, format!("{name} is null")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn amc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null after a
/// successful call. Valid until the next `amc_*` call on the same thread.
#[no_mangle]
pub extern "C" fn amc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Parses and validates TOML config text. On success `*out` owns a new handle.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn amc_config_parse(text: *const c_char, out: *mut *mut AmcConfig) -> AmcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = std::ptr::null_mut();
        let cfg = parse_config(str_arg(text, "text")?).map_err(config_errors)?;
        *out = Box::into_raw(Box::new(AmcConfig { inner: cfg }));
        Ok(())
    })
}

/// Reads and validates a TOML config file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn amc_config_load(path: *const c_char, out: *mut *mut AmcConfig) -> AmcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = std::ptr::null_mut();
        let path = str_arg(path, "path")?;
        let text = std::fs::read_to_string(path).map_err(|e| Failure::new(AmcStatus::Io, format!("{path}: {e}")))?;
        let cfg = parse_config(&text).map_err(config_errors)?;
        *out = Box::into_raw(Box::new(AmcConfig { inner: cfg }));
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a handle from `amc_config_parse`/`amc_config_load`
/// that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn amc_config_free(config: *mut AmcConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

fn apply_override(config: &mut AmcConfig, overrides: Overrides) -> Result<(), Failure> {
    config.inner = overrides.apply(config.inner.clone()).map_err(config_errors)?;
    Ok(())
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn amc_config_set_seed(config: *mut AmcConfig, seed: u64) -> AmcStatus {
    guard(|| apply_override(out_ptr(config, "config")?, Overrides { seed: Some(seed), ..Default::default() }))
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn amc_config_set_steps(config: *mut AmcConfig, steps: u64) -> AmcStatus {
    guard(|| apply_override(out_ptr(config, "config")?, Overrides { steps: Some(steps), ..Default::default() }))
}

/// Runs replicate `replicate` of the configured chain (seed, steps, burn-in
/// and snapshot cadence from the config). On success `*out` owns a new trace.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn amc_run_chain(config: *const AmcConfig, replicate: u64, out: *mut *mut AmcTrace) -> AmcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = std::ptr::null_mut();
        let cfg = &handle(config, "config")?.inner;
        let sampler = Sampler::from_config(cfg).map_err(|e| Failure::new(AmcStatus::Model, e.to_string()))?;
        let opts = TraceOptions { theta_cadence: cfg.run.trace_cadence, burn_in: cfg.run.burn_in };
        let trace = sampler.run_replicate(cfg.run.steps, cfg.run.seed, replicate, &opts);
        *out = Box::into_raw(Box::new(AmcTrace { inner: trace }));
        Ok(())
    })
}

/// Runs the full experiment and writes its artifacts to `out_dir`, or to the
/// config's `output` when `out_dir` is null. Returns
/// [`AmcStatus::DiagnosticFailed`] when a required check fails.
///
/// # Safety
/// `config` must be a live handle; `out_dir` null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn amc_run_experiment(config: *const AmcConfig, out_dir: *const c_char) -> AmcStatus {
    guard(|| {
        let mut cfg = handle(config, "config")?.inner.clone();
        if !out_dir.is_null() {
            cfg.output = str_arg(out_dir, "out_dir")?.to_string();
        }
        let manifest = run_experiment(&cfg, None)?;
        if manifest.passed() {
            Ok(())
        } else {
            let failed: Vec<&str> =
                manifest.checks.iter().filter(|c| c.required && !c.passed).map(|c| c.name.as_str()).collect();
            Err(Failure::new(AmcStatus::DiagnosticFailed, format!("required checks failed: {}", failed.join(", "))))
        }
    })
}

/// Number of recorded steps; 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn amc_trace_len(trace: *const AmcTrace) -> u64 {
    trace.as_ref().map_or(0, |t| t.inner.len() as u64)
}

/// State dimension; 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn amc_trace_dim(trace: *const AmcTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.inner.dim())
}

/// Copies all samples row-major (`len × dim`) into `buf`, which must hold at
/// least `len · dim` values.
///
/// # Safety
/// `trace` must be a live handle and `buf` valid for `buf_len` writes.
#[no_mangle]
pub unsafe extern "C" fn amc_trace_copy_samples(trace: *const AmcTrace, buf: *mut f64, buf_len: usize) -> AmcStatus {
    guard(|| {
        let samples = handle(trace, "trace")?.inner.samples();
        copy_out(samples, buf, buf_len)
    })
}

/// Copies the final flattened parameter into `buf`; `*needed` receives its
/// length even when the buffer is too small.
///
/// # Safety
/// `trace` must be a live handle, `buf` valid for `buf_len` writes and
/// `needed` null or valid.
#[no_mangle]
pub unsafe extern "C" fn amc_trace_copy_final_theta(
    trace: *const AmcTrace,
    buf: *mut f64,
    buf_len: usize,
    needed: *mut usize,
) -> AmcStatus {
    guard(|| {
        let theta = &handle(trace, "trace")?.inner.final_theta;
        if let Some(n) = needed.as_mut() {
            *n = theta.len();
        }
        copy_out(theta, buf, buf_len)
    })
}

unsafe fn copy_out(values: &[f64], buf: *mut f64, buf_len: usize) -> Result<(), Failure> {
    if buf_len < values.len() {
        return Err(Failure::new(
            AmcStatus::BufferTooSmall,
            format!("buffer holds {buf_len} values, {} required", values.len()),
        ));
    }
    if values.is_empty() {
        return Ok(());
    }
    if buf.is_null() {
        return Err(Failure::new(AmcStatus::NullPointer, "buf is null"));
    }
    std::ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    Ok(())
}

/// Fraction of accepted proposals; NaN for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn amc_trace_acceptance_rate(trace: *const AmcTrace) -> f64 {
    trace.as_ref().map_or(f64::NAN, |t| t.inner.acceptance_rate())
}

/// Number of truncation exits; 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn amc_trace_reinit_count(trace: *const AmcTrace) -> u64 {
    trace.as_ref().map_or(0, |t| t.inner.total_reinits() as u64)
}

/// Truncation level after the last step; 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn amc_trace_final_kappa(trace: *const AmcTrace) -> u32 {
    trace.as_ref().map_or(0, |t| t.inner.final_kappa)
}

/// Writes the trace as CSV (`k, x_1..x_d, accepted, log_accept, kappa, nu, reinit`).
///
/// # Safety
/// `trace` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn amc_trace_write_csv(trace: *const AmcTrace, path: *const c_char) -> AmcStatus {
    guard(|| {
        let t = handle(trace, "trace")?;
        let path = str_arg(path, "path")?;
        write_trace_csv(&t.inner, Path::new(path))?;
        Ok(())
    })
}

/// # Safety
/// `trace` must be null or a handle from `amc_run_chain` that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn amc_trace_free(trace: *mut AmcTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Invariant law of the two-state chain whose flip probability depends on the
/// current state. Writes `(π1, π2)` to `out`.
///
/// # Safety
/// `out` must be valid for two writes.
#[no_mangle]
pub unsafe extern "C" fn amc_two_state_oracle(theta1: f64, theta2: f64, out: *mut f64) -> AmcStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::new(AmcStatus::NullPointer, "out is null"));
        }
        let r = two_state_oracle(theta1, theta2).map_err(|e| Failure::new(AmcStatus::InvalidArgument, e.to_string()))?;
        std::ptr::copy_nonoverlapping(r.adaptive_invariant.as_ptr(), out, 2);
        Ok(())
    })
}
