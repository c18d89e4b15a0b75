//! Runs a validated [`ExperimentConfig`]: replicates on a worker pool, then
//! reports, traces and a manifest written from a single thread.
//!
//! Every artifact name starts with `<hash>-s<seed>`, where `<hash>` is the
//! first 12 hex digits of the SHA-256 of the canonical config text (with the
//! output directory blanked out).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{AlgorithmConfig, ConfigError, ExperimentConfig};
use crate::controller::{AdaptiveChain, AdaptiveScheme, RunSummary, RunTrace, TraceOptions};
use crate::diagnostics::{
    self, clt_from_replicates, drift_probe, ergodic_average, infimum_density_ratio, minorization_probe,
    srwm_drift_ceiling, CltReport, DriftEstimate, ErgodicReport, MinorizationReport, PowerDrift, ReplicateAverage,
    TestFunction,
};
use crate::error::{Error, Result};
use crate::mixture_em::{Estimate, MixtureSuffStats, MstepFloors};
use crate::nsrwm::NsrwmParam;
use crate::schemes::{em_imh_chain, EmImhScheme, EmImhSetup, NsrwmScheme};
use crate::target::TargetModel;

/// Either shipped sampler, built from a config.
#[derive(Debug, Clone)]
pub enum Sampler {
    Nsrwm(AdaptiveChain<NsrwmScheme>),
    EmImh(AdaptiveChain<EmImhScheme>),
}

impl Sampler {
    /// `config` must already be validated (defaults filled).
    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        let target = TargetModel::new(config.target.clone())?;
        let schedule = config.schedule();
        let missing = || Error::InvalidParameter("config has not been validated".into());
        match &config.algorithm {
            AlgorithmConfig::Nsrwm { lambda, x0, mu0, gamma0 } => {
                let mu0 = mu0.clone().ok_or_else(missing)?;
                let gamma0 = gamma0.clone().ok_or_else(missing)?;
                let coverage = { config.coverage }.fill_nsrwm(&mu0, &gamma0);
                let scheme = NsrwmScheme::new(target, lambda.ok_or_else(missing)?, coverage)?;
                let theta0 = NsrwmParam::new(mu0, gamma0)?;
                Ok(Self::Nsrwm(AdaptiveChain::new(scheme, schedule, x0.clone().ok_or_else(missing)?, theta0)?))
            }
            AlgorithmConfig::EmImh {
                iota,
                safeguard,
                safeguard_scale,
                x0,
                center,
                init_means,
                init_cov,
                weight_floor,
                cov_floor,
                ..
            } => {
                let init_cov = init_cov.clone().ok_or_else(missing)?;
                let init_means = init_means.clone().ok_or_else(missing)?;
                let center = center.clone().ok_or_else(missing)?;
                let coverage = { config.coverage }.fill_mixture(&center, &init_cov, init_means.len());
                let setup = EmImhSetup {
                    init_means,
                    init_cov,
                    iota: iota.ok_or_else(missing)?,
                    safeguard: safeguard.ok_or_else(missing)?,
                    safeguard_scale: safeguard_scale.ok_or_else(missing)?,
                    center: Some(center),
                    floors: Some(MstepFloors {
                        weight_floor: weight_floor.ok_or_else(missing)?,
                        cov_floor: cov_floor.ok_or_else(missing)?,
                    }),
                    coverage: Some(coverage),
                };
                Ok(Self::EmImh(em_imh_chain(target, &setup, schedule, x0.clone().ok_or_else(missing)?)?))
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Nsrwm(_) => "nsrwm",
            Self::EmImh(_) => "em_imh",
        }
    }

    pub fn target(&self) -> &TargetModel {
        match self {
            Self::Nsrwm(c) => c.scheme().target(),
            Self::EmImh(c) => c.scheme().target(),
        }
    }

    pub fn dim(&self) -> usize {
        self.target().dim()
    }

    pub fn run_replicate(&self, steps: u64, seed: u64, replicate: u64, options: &TraceOptions) -> RunTrace {
        match self {
            Self::Nsrwm(c) => c.run_replicate(steps, seed, replicate, options),
            Self::EmImh(c) => c.run_replicate(steps, seed, replicate, options),
        }
    }
}

/// CLI-level overrides applied before validation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub steps: Option<u64>,
    pub output: Option<String>,
}

impl Overrides {
    pub fn apply(&self, config: ExperimentConfig) -> std::result::Result<ExperimentConfig, Vec<ConfigError>> {
        let mut c = config;
        if let Some(s) = self.seed {
            c.run.seed = s;
        }
        if let Some(s) = self.steps {
            c.run.steps = s;
        }
        if let Some(o) = &self.output {
            c.output = o.clone();
        }
        c.validated()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("{}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n"))]
    Config(Vec<ConfigError>),
    #[error(transparent)]
    Model(#[from] Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl ExperimentError {
    /// Process exit code: 2 for config problems, 3 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Model(_) => 2,
            Self::Io { .. } => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub kind: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub required: bool,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub algorithm: String,
    pub steps: u64,
    pub replicates: u64,
    pub artifacts: Vec<Artifact>,
    pub checks: Vec<Check>,
}

impl Manifest {
    /// False iff some required check failed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.required)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minorization: Option<MinorizationReport>,
}

/// Drift ratios and the bound each one is checked against (plus 3 SE).
///
/// N-SRWM uses `V = (π/sup π)^{−η}` with the constant bound
/// `sup_u (1 − u + u^{1−η})`. EM-IMH uses `V = 1 + |x|²` with the pointwise
/// bound `1 − ε̂ + q(V)/V(x)`, where `ε̂` is the sampled `min q/π` and `q(V)`
/// a Monte Carlo mean under the proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSection {
    pub lyapunov: String,
    pub eta: Option<f64>,
    pub eps_hat: Option<f64>,
    pub proposal_v: Option<Estimate>,
    pub estimates: Vec<DriftEstimate>,
    pub bounds: Vec<f64>,
}

/// Full SHA-256 of the canonical config text, output directory excluded.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let mut c = config.clone();
    c.output.clear();
    hex::encode(Sha256::digest(c.to_toml().as_bytes()))
}

struct ReplicateResult {
    summary: RunSummary,
    averages: Vec<ReplicateAverage>,
    clt: Option<ReplicateAverage>,
    trace: Option<RunTrace>,
}

/// Runs every replicate on a pool of `workers` threads (all available cores
/// when `None`) and writes artifacts under `config.output`.
pub fn run_experiment(config: &ExperimentConfig, workers: Option<usize>) -> std::result::Result<Manifest, ExperimentError> {
    let config = config.clone().validated().map_err(ExperimentError::Config)?;
    let sampler = Sampler::from_config(&config)?;
    let target = sampler.target().clone();
    let functions = config.test_functions();
    let clt_cfg = config.diagnostics.clt.clone();
    let clt_fn = clt_cfg.as_ref().map(|c| TestFunction::parse(&c.function).expect("validated"));
    let bm = clt_cfg.as_ref().is_some_and(|c| c.sigma == diagnostics::SigmaMethod::BatchMeans);
    let run = config.run;
    let opts = TraceOptions { theta_cadence: run.trace_cadence, burn_in: run.burn_in };

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder.build().map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    let results: Vec<ReplicateResult> = pool.install(|| {
        (0..run.replicates)
            .into_par_iter()
            .map(|r| {
                let trace = sampler.run_replicate(run.steps, run.seed, r, &opts);
                ReplicateResult {
                    summary: trace.summary(),
                    averages: functions.iter().map(|f| ReplicateAverage::of(&trace, *f, true)).collect(),
                    clt: clt_fn.map(|f| ReplicateAverage::of(&trace, f, bm)),
                    trace: (r == 0).then_some(trace),
                }
            })
            .collect()
    });

    let hash = config_hash(&config);
    let prefix = format!("{}-s{}", &hash[..12], run.seed);
    let out = PathBuf::from(&config.output);
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    let mut artifacts = Vec::new();
    let mut checks = Vec::new();
    let trace0 = results[0].trace.as_ref().expect("replicate 0 keeps its trace");

    let name = format!("{prefix}-trace.csv");
    write_trace_csv(trace0, &out.join(&name))?;
    artifacts.push(Artifact { kind: "trace".into(), path: name });

    if run.trace_cadence > 0 {
        let name = format!("{prefix}-theta.jsonl");
        let path = out.join(&name);
        let mut text = String::new();
        for s in trace0.snapshots() {
            text.push_str(&serde_json::to_string(s).expect("serializable"));
            text.push('\n');
        }
        fs::write(&path, text).map_err(io_err(&path))?;
        artifacts.push(Artifact { kind: "theta_snapshots".into(), path: name });
    }

    let exacts: Vec<f64> = functions.iter().map(|f| f.exact(&target)).collect();
    let ergodic: Vec<ErgodicReport> = functions
        .iter()
        .zip(&exacts)
        .map(|(f, e)| ergodic_average(trace0, *f, run.burn_in, Some(*e)))
        .collect::<Result<_>>()?;
    for r in &ergodic {
        let ok = r.within_tolerance().unwrap_or(false);
        checks.push(Check {
            name: format!("lln:{}", r.function),
            required: config.diagnostics.lln_required,
            passed: ok,
            detail: format!("|S_n - pi(f)| = {:.3e}, tolerance {:.3e}", r.error.unwrap_or(f64::NAN).abs(), r.tolerance.unwrap_or(f64::NAN)),
        });
    }
    let name = format!("{prefix}-ergodic.json");
    write_json(&out.join(&name), &ergodic)?;
    artifacts.push(Artifact { kind: "ergodic_report".into(), path: name });

    let name = format!("{prefix}-replicates.csv");
    write_replicates_csv(&results, &functions, &exacts, &out.join(&name))?;
    artifacts.push(Artifact { kind: "replicate_summary".into(), path: name });

    if let (Some(cfg), Some(f)) = (&clt_cfg, clt_fn) {
        let per_rep: Vec<ReplicateAverage> = results.iter().map(|r| r.clt.expect("computed")).collect();
        let report: CltReport = clt_from_replicates(f, f.exact(&target), cfg.sigma, &per_rep)?;
        checks.push(Check {
            name: format!("clt:{}", report.function),
            required: cfg.required,
            passed: report.p_value > cfg.p_threshold,
            detail: format!("KS D = {:.4}, p = {:.4}", report.ks_statistic, report.p_value),
        });
        let name = format!("{prefix}-clt.json");
        write_json(&out.join(&name), &report)?;
        artifacts.push(Artifact { kind: "clt_report".into(), path: name });
    }

    let probes = run_probes(&config, &sampler, trace0, &mut checks)?;
    if probes.drift.is_some() || probes.minorization.is_some() {
        let name = format!("{prefix}-probes.json");
        write_json(&out.join(&name), &probes)?;
        artifacts.push(Artifact { kind: "probe_report".into(), path: name });
    }

    let manifest_name = format!("{prefix}-manifest.json");
    artifacts.push(Artifact { kind: "manifest".into(), path: manifest_name.clone() });
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: hash,
        seed: run.seed,
        algorithm: sampler.name().into(),
        steps: run.steps,
        replicates: run.replicates,
        artifacts,
        checks,
    };
    write_json(&out.join(&manifest_name), &manifest)?;
    Ok(manifest)
}

fn final_param<S: AdaptiveScheme>(chain: &AdaptiveChain<S>, trace: &RunTrace, parse: impl Fn(&[f64]) -> Result<S::Param>) -> S::Param {
    // After an exit the recorded parameter is not the one the next step would use.
    if trace.final_nu == 0 {
        return chain.reset().theta0().clone();
    }
    parse(&trace.final_theta).unwrap_or_else(|_| chain.reset().theta0().clone())
}

fn run_probes(config: &ExperimentConfig, sampler: &Sampler, trace: &RunTrace, checks: &mut Vec<Check>) -> Result<ProbeReport> {
    let seed = config.run.seed;
    let mut report = ProbeReport { drift: None, minorization: None };
    if let Some(d) = &config.diagnostics.drift {
        let section = match sampler {
            Sampler::Nsrwm(c) => {
                let v = PowerDrift::new(sampler.target(), d.eta)?;
                let theta = final_param(c, trace, |v| NsrwmParam::unflatten(sampler.dim(), v));
                let estimates = drift_probe(&c.scheme().kernel(&theta)?, |x| v.log_v(x), &d.points, d.draws, seed);
                let ceiling = srwm_drift_ceiling(d.eta);
                DriftSection {
                    lyapunov: format!("(pi/sup pi)^-{}", d.eta),
                    eta: Some(d.eta),
                    eps_hat: None,
                    proposal_v: None,
                    bounds: vec![ceiling; estimates.len()],
                    estimates,
                }
            }
            Sampler::EmImh(c) => {
                let m = c.reset().theta0().n_components();
                let theta = final_param(c, trace, |v| MixtureSuffStats::unflatten(m, sampler.dim(), v));
                let kernel = c.scheme().kernel(&theta)?;
                let q = kernel.proposal();
                let v = |x: &[f64]| 1.0 + crate::linalg::dot(x, x);
                let estimates = drift_probe(&kernel, |x| v(x).ln(), &d.points, d.draws, seed);
                let mut rng = crate::controller::replicate_rng(seed, u64::MAX - 1);
                let eps = minorization_probe(|x| q.log_pdf(x), sampler.target(), d.draws, None, &mut rng).eps_hat;
                let qv: Vec<f64> = (0..d.draws).map(|_| v(&q.sample(&mut rng))).collect();
                let qv = Estimate::from_values(&qv);
                let bounds = d.points.iter().map(|x| 1.0 - eps + qv.estimate / v(x)).collect();
                DriftSection {
                    lyapunov: "1 + |x|^2".into(),
                    eta: None,
                    eps_hat: Some(eps),
                    proposal_v: Some(qv),
                    bounds,
                    estimates,
                }
            }
        };
        let slack = |i: usize| {
            let extra = section.proposal_v.as_ref().map_or(0.0, |qv| {
                qv.std_error / (1.0 + crate::linalg::dot(&d.points[i], &d.points[i]))
            });
            3.0 * (section.estimates[i].std_error + extra)
        };
        let passed = (0..section.estimates.len()).all(|i| section.estimates[i].ratio <= section.bounds[i] + slack(i));
        let worst = (0..section.estimates.len())
            .map(|i| section.estimates[i].ratio - section.bounds[i])
            .fold(f64::NEG_INFINITY, f64::max);
        checks.push(Check {
            name: "drift".into(),
            required: d.required,
            passed,
            detail: format!("V = {}, max ratio minus bound {worst:.4}", section.lyapunov),
        });
        report.drift = Some(section);
    }
    if let (Some(mcfg), Sampler::EmImh(c)) = (&config.diagnostics.minorization, sampler) {
        let m = c.reset().theta0().n_components();
        let theta = final_param(c, trace, |v| MixtureSuffStats::unflatten(m, sampler.dim(), v));
        let proposal = c.scheme().proposal(&theta)?;
        let analytic = safeguard_minorization(c.scheme());
        let mut rng = crate::controller::replicate_rng(seed, u64::MAX);
        let r = minorization_probe(|x| proposal.log_pdf(x), sampler.target(), mcfg.samples, Some(analytic), &mut rng);
        checks.push(Check {
            name: "minorization".into(),
            required: mcfg.required,
            passed: r.eps_hat >= 0.5 * analytic,
            detail: format!("eps_hat {:.4e} vs iota*e {:.4e}", r.eps_hat, analytic),
        });
        report.minorization = Some(r);
    }
    Ok(report)
}

/// `ι · inf ζ/π`, the lower bound on `q/π` guaranteed by the safeguard alone.
pub fn safeguard_minorization(scheme: &EmImhScheme) -> f64 {
    let t = scheme.target();
    let zeta = scheme.safeguard();
    let mut starts = t.component_means();
    starts.push(match zeta {
        crate::kernels::Safeguard::Gaussian(g) => g.mean().to_vec(),
        crate::kernels::Safeguard::StudentT { loc_scale, .. } => loc_scale.mean().to_vec(),
    });
    let (inf, _) = infimum_density_ratio(|x| zeta.log_pdf(x), |x| zeta.grad_log_pdf(x), t, &starts);
    scheme.iota() * inf
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> std::result::Result<(), ExperimentError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Columns: `k, x_1..x_d, accepted, log_accept, kappa, nu, reinit`.
pub fn write_trace_csv(trace: &RunTrace, path: &Path) -> std::result::Result<(), ExperimentError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let wrap = |e: csv::Error| ExperimentError::Io { path: path.to_path_buf(), source: e.into() };
    let mut header = vec!["k".to_string()];
    header.extend((1..=trace.dim()).map(|i| format!("x_{i}")));
    header.extend(["accepted", "log_accept", "kappa", "nu", "reinit"].map(String::from));
    w.write_record(&header).map_err(wrap)?;
    for r in trace.records() {
        let mut row = vec![r.k.to_string()];
        row.extend(r.x.iter().map(|v| v.to_string()));
        row.push(u8::from(r.accepted).to_string());
        row.push(r.log_accept.to_string());
        row.push(r.kappa.to_string());
        row.push(r.nu.to_string());
        row.push(u8::from(r.reinit).to_string());
        w.write_record(&row).map_err(wrap)?;
    }
    w.into_inner()
        .map_err(|e| ExperimentError::Io { path: path.to_path_buf(), source: e.into_error() })?
        .flush()
        .map_err(io_err(path))
}

fn write_replicates_csv(
    results: &[ReplicateResult],
    functions: &[TestFunction],
    exacts: &[f64],
    path: &Path,
) -> std::result::Result<(), ExperimentError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let wrap = |e: csv::Error| ExperimentError::Io { path: path.to_path_buf(), source: e.into() };
    let mut header: Vec<String> =
        ["replicate", "steps", "total_reinits", "final_kappa", "acceptance_rate"].map(String::from).to_vec();
    for f in functions {
        header.push(format!("mean[{f}]"));
        header.push(format!("lln_ok[{f}]"));
    }
    w.write_record(&header).map_err(wrap)?;
    for (r, res) in results.iter().enumerate() {
        let s = &res.summary;
        let mut row = vec![
            r.to_string(),
            s.steps.to_string(),
            s.total_reinits.to_string(),
            s.final_kappa.to_string(),
            s.acceptance_rate.to_string(),
        ];
        for (a, e) in res.averages.iter().zip(exacts) {
            row.push(a.average.to_string());
            let ok = a.sigma2_bm.is_some_and(|s2| (a.average - e).abs() <= 5.0 * s2.sqrt() / (a.n as f64).sqrt());
            row.push(u8::from(ok).to_string());
        }
        w.write_record(&row).map_err(wrap)?;
    }
    w.into_inner()
        .map_err(|e| ExperimentError::Io { path: path.to_path_buf(), source: e.into_error() })?
        .flush()
        .map_err(io_err(path))
}
