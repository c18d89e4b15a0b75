//! Experiment configuration (TOML).
//!
//! Parsing has two phases: TOML deserialization (shape errors, reported one at
//! a time by the deserializer) and semantic validation, which reports every
//! violated constraint with its field path. A parsed config has every default
//! filled in, so serializing it and parsing again gives an equal value.

use serde::{Deserialize, Serialize};

use crate::controller::{MixtureCoverage, NsrwmCoverage, StepsizeSchedule};
use crate::diagnostics::{SigmaMethod, TestFunction, MIN_CLT_REPLICATES};
use crate::kernels::SafeguardKind;
use crate::linalg::{self, SymMatrix};
use crate::mixture_em::{MixtureSuffStats, MixtureXi, MstepFloors};
use crate::nsrwm::{self, NsrwmParam};
use crate::target::{TargetModel, TargetSpec};

pub const DEFAULT_OUTPUT: &str = "adaptmc-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_output")]
    pub output: String,
    pub target: TargetSpec,
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub coverage: CoverageConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

fn default_output() -> String {
    DEFAULT_OUTPUT.into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgorithmConfig {
    Nsrwm {
        /// Proposal scale; `2.38²/d` when absent.
        lambda: Option<f64>,
        x0: Option<Vec<f64>>,
        mu0: Option<Vec<f64>>,
        gamma0: Option<SymMatrix>,
    },
    EmImh {
        components: Option<usize>,
        iota: Option<f64>,
        safeguard: Option<SafeguardKind>,
        /// Safeguard covariance as a multiple of `init_cov`.
        safeguard_scale: Option<f64>,
        x0: Option<Vec<f64>>,
        /// Safeguard location and centre of the coverage sets.
        center: Option<Vec<f64>>,
        init_means: Option<Vec<Vec<f64>>>,
        init_cov: Option<SymMatrix>,
        weight_floor: Option<f64>,
        cov_floor: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub c0: f64,
    pub alpha: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        let s = StepsizeSchedule::default();
        Self { c0: s.c0(), alpha: s.alpha() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageConfig {
    pub m0: Option<f64>,
    pub m1: Option<f64>,
    pub eps0: Option<f64>,
    pub f0: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub steps: u64,
    pub burn_in: u64,
    pub seed: u64,
    pub replicates: u64,
    /// Record `θ` every this many steps (0 = never).
    pub trace_cadence: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { steps: 10_000, burn_in: 0, seed: 0, replicates: 1, trace_cadence: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    pub functions: Vec<String>,
    pub batches: usize,
    /// Fail the run unless every function's ergodic average is within
    /// `5 σ̂_bm/√n` of the exact value.
    pub lln_required: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clt: Option<CltConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minorization: Option<MinorizationConfig>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            functions: vec!["x1".into()],
            batches: crate::diagnostics::DEFAULT_BATCHES,
            lln_required: false,
            clt: None,
            drift: None,
            minorization: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CltConfig {
    #[serde(default = "default_clt_function")]
    pub function: String,
    #[serde(default = "default_sigma")]
    pub sigma: SigmaMethod,
    /// Minimum KS p-value when `required`.
    #[serde(default = "default_p_threshold")]
    pub p_threshold: f64,
    #[serde(default)]
    pub required: bool,
}

fn default_clt_function() -> String {
    "x1".into()
}

fn default_sigma() -> SigmaMethod {
    SigmaMethod::Replication
}

fn default_p_threshold() -> f64 {
    0.01
}

/// Drift probe of the kernel at the final parameter of replicate 0, with
/// `V = (π/sup π)^{−η}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    #[serde(default = "default_eta")]
    pub eta: f64,
    pub points: Vec<Vec<f64>>,
    #[serde(default = "default_draws")]
    pub draws: usize,
    /// Fail unless every ratio is below `sup(1 − u + u^{1−η}) + 3 SE`.
    #[serde(default)]
    pub required: bool,
}

fn default_eta() -> f64 {
    0.5
}

fn default_draws() -> usize {
    10_000
}

/// Minorization probe of the final proposal of replicate 0 (EM-IMH only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinorizationConfig {
    #[serde(default = "default_draws")]
    pub samples: usize,
    /// Fail unless `eps_hat ≥ 0.5 · ι · inf ζ/π`.
    #[serde(default)]
    pub required: bool,
}

/// One violated constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Default)]
struct Errors(Vec<ConfigError>);

impl Errors {
    fn push(&mut self, path: &str, message: impl Into<String>) {
        self.0.push(ConfigError { path: path.into(), message: message.into() });
    }

    fn check(&mut self, ok: bool, path: &str, message: impl Into<String>) {
        if !ok {
            self.push(path, message);
        }
    }
}

/// Parses and validates `text`, filling in defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, Vec<ConfigError>> {
    let raw: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let path = e.span().map(|s| format!("line {}", text[..s.start].lines().count().max(1)));
        vec![ConfigError { path: path.unwrap_or_else(|| "<document>".into()), message: e.message().to_string() }]
    })?;
    raw.validated()
}

impl ExperimentConfig {
    /// TOML text that [`parse_config`] maps back to `self`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every constraint and returns the config with defaults filled.
    pub fn validated(mut self) -> Result<Self, Vec<ConfigError>> {
        let mut errs = Errors::default();
        let target = match TargetModel::new(self.target.clone()) {
            Ok(t) => Some(t),
            Err(e) => {
                errs.push("target", e.to_string());
                None
            }
        };

        let s = self.schedule;
        errs.check(s.c0 > 0.0 && s.c0.is_finite(), "schedule.c0", format!("c0 must be positive, got {}", s.c0));
        errs.check(
            s.alpha > 0.5 && s.alpha <= 1.0,
            "schedule.alpha",
            format!(
                "alpha = {} violates the stepsize condition: need 1/2 < alpha <= 1 so that sum gamma_k \
                 diverges while sum (gamma_k^2 + k^-1/2 gamma_k) converges",
                s.alpha
            ),
        );

        let r = self.run;
        errs.check(r.steps > 0, "run.steps", "steps must be positive");
        errs.check(r.burn_in < r.steps, "run.burn_in", format!("burn_in {} must be below steps {}", r.burn_in, r.steps));
        errs.check(r.replicates >= 1, "run.replicates", "replicates must be at least 1");

        for (name, v) in [
            ("coverage.m0", self.coverage.m0),
            ("coverage.m1", self.coverage.m1),
            ("coverage.eps0", self.coverage.eps0),
            ("coverage.f0", self.coverage.f0),
        ] {
            if let Some(v) = v {
                errs.check(v > 0.0 && v.is_finite(), name, format!("must be positive, got {v}"));
            }
        }

        if let Some(t) = &target {
            self.fill_algorithm(t, &mut errs);
            self.validate_diagnostics(t.dim(), &mut errs);
        }

        if errs.0.is_empty() {
            Ok(self)
        } else {
            Err(errs.0)
        }
    }

    fn fill_algorithm(&mut self, t: &TargetModel, errs: &mut Errors) {
        let d = t.dim();
        let vec_ok = |v: &Vec<f64>| v.len() == d && v.iter().all(|x| x.is_finite());
        let spd = |m: &SymMatrix| m.dim() == d && linalg::factorize(m).is_ok();
        match &mut self.algorithm {
            AlgorithmConfig::Nsrwm { lambda, x0, mu0, gamma0 } => {
                let l = *lambda.get_or_insert(nsrwm::default_lambda(d));
                errs.check(l > 0.0 && l.is_finite(), "algorithm.lambda", format!("lambda must be positive, got {l}"));
                let x = x0.get_or_insert_with(|| vec![0.0; d]);
                errs.check(vec_ok(x), "algorithm.x0", format!("expected {d} finite values"));
                let m = mu0.get_or_insert_with(|| vec![0.0; d]);
                errs.check(vec_ok(m), "algorithm.mu0", format!("expected {d} finite values"));
                let g = gamma0.get_or_insert_with(|| SymMatrix::identity(d));
                errs.check(spd(g), "algorithm.gamma0", format!("must be a positive definite {d}x{d} matrix"));
                if vec_ok(m) && spd(g) {
                    let cov = self.coverage.fill_nsrwm(m, g);
                    let theta = NsrwmParam::new(m.clone(), g.clone()).expect("shapes checked");
                    errs.check(
                        crate::controller::CompactCoverage::contains(&cov, 0, &theta),
                        "coverage",
                        "initial parameter (mu0, gamma0) lies outside the first truncation set",
                    );
                }
            }
            AlgorithmConfig::EmImh {
                components,
                iota,
                safeguard,
                safeguard_scale,
                x0,
                center,
                init_means,
                init_cov,
                weight_floor,
                cov_floor,
            } => {
                let m = *components.get_or_insert(2);
                errs.check(m >= 1, "algorithm.components", "at least one component is required");
                let i = *iota.get_or_insert(0.1);
                errs.check(i > 0.0 && i < 1.0, "algorithm.iota", format!("iota out of (0,1): got {i}"));
                safeguard.get_or_insert(SafeguardKind::Gaussian);
                let sc = *safeguard_scale.get_or_insert(25.0);
                errs.check(sc > 0.0 && sc.is_finite(), "algorithm.safeguard_scale", "must be positive");
                let x = x0.get_or_insert_with(|| vec![0.0; d]);
                errs.check(vec_ok(x), "algorithm.x0", format!("expected {d} finite values"));
                let c = center.get_or_insert_with(|| vec![0.0; d]).clone();
                errs.check(vec_ok(&c), "algorithm.center", format!("expected {d} finite values"));
                let g = init_cov.get_or_insert_with(|| SymMatrix::identity(d)).clone();
                let g_ok = spd(&g);
                errs.check(g_ok, "algorithm.init_cov", format!("must be a positive definite {d}x{d} matrix"));
                if !(vec_ok(&c) && g_ok && m >= 1) {
                    return;
                }
                let means = init_means.get_or_insert_with(|| default_init_means(&c, &g, m));
                errs.check(
                    means.len() == m && means.iter().all(vec_ok),
                    "algorithm.init_means",
                    format!("expected {m} means of dimension {d}"),
                );
                let scale = linalg::eigen_bounds(&g).1;
                let floors = MstepFloors::defaults(m, scale);
                let wf = *weight_floor.get_or_insert(floors.weight_floor);
                errs.check(
                    wf > 0.0 && wf * (m as f64) < 1.0,
                    "algorithm.weight_floor",
                    format!("must lie in (0, 1/m), got {wf}"),
                );
                let cf = *cov_floor.get_or_insert(floors.cov_floor);
                errs.check(cf > 0.0 && cf.is_finite(), "algorithm.cov_floor", "must be positive");
                let means_ok = means.len() == m && means.iter().all(vec_ok);
                if means_ok {
                    let cov = self.coverage.fill_mixture(&c, &g, m);
                    let xi = MixtureXi::new(vec![1.0 / m as f64; m], means.clone(), vec![g.clone(); m]);
                    let inside = xi.is_ok_and(|xi| {
                        crate::controller::CompactCoverage::contains(&cov, 0, &MixtureSuffStats::from_xi(&xi))
                    });
                    errs.check(
                        inside,
                        "coverage",
                        "initial mixture (init_means, init_cov) lies outside the first truncation set",
                    );
                }
            }
        }
    }

    fn validate_diagnostics(&self, d: usize, errs: &mut Errors) {
        let diag = &self.diagnostics;
        let check_fn = |errs: &mut Errors, path: &str, id: &str| match TestFunction::parse(id) {
            Ok(f) => errs.check(
                f.max_index().map_or(true, |i| i < d),
                path,
                format!("{id} refers to a coordinate beyond dimension {d}"),
            ),
            Err(e) => errs.push(path, e.to_string()),
        };
        for (i, id) in diag.functions.iter().enumerate() {
            check_fn(errs, &format!("diagnostics.functions[{i}]"), id);
        }
        let n_retained = self.run.steps.saturating_sub(self.run.burn_in);
        errs.check(
            diag.batches >= 2 && n_retained >= 2 * diag.batches as u64,
            "diagnostics.batches",
            format!("need 2 <= batches <= (steps - burn_in)/2, got {}", diag.batches),
        );
        if let Some(clt) = &diag.clt {
            check_fn(errs, "diagnostics.clt.function", &clt.function);
            errs.check(
                self.run.replicates >= MIN_CLT_REPLICATES as u64,
                "run.replicates",
                format!("the CLT test needs at least {MIN_CLT_REPLICATES} replicates, got {}", self.run.replicates),
            );
            errs.check(
                clt.p_threshold > 0.0 && clt.p_threshold < 1.0,
                "diagnostics.clt.p_threshold",
                "must lie in (0, 1)",
            );
        }
        if let Some(drift) = &diag.drift {
            errs.check(drift.eta > 0.0 && drift.eta < 1.0, "diagnostics.drift.eta", "eta must lie in (0, 1)");
            errs.check(drift.draws >= 2, "diagnostics.drift.draws", "need at least 2 draws");
            errs.check(
                !drift.points.is_empty() && drift.points.iter().all(|p| p.len() == d),
                "diagnostics.drift.points",
                format!("need at least one point, each of dimension {d}"),
            );
        }
        if let Some(m) = &diag.minorization {
            errs.check(m.samples >= 1, "diagnostics.minorization.samples", "need at least one sample");
            errs.check(
                matches!(self.algorithm, AlgorithmConfig::EmImh { .. }),
                "diagnostics.minorization",
                "the minorization probe applies to the em_imh algorithm only",
            );
        }
    }

    pub fn schedule(&self) -> StepsizeSchedule {
        StepsizeSchedule::new(self.schedule.c0, self.schedule.alpha).expect("validated")
    }

    pub fn test_functions(&self) -> Vec<TestFunction> {
        self.diagnostics.functions.iter().map(|f| TestFunction::parse(f).expect("validated")).collect()
    }
}

impl CoverageConfig {
    /// Fills absent fields with defaults around `(μ₀, Γ₀)`.
    pub fn fill_nsrwm(&mut self, mu0: &[f64], gamma0: &SymMatrix) -> NsrwmCoverage {
        let d = NsrwmCoverage::around(mu0, gamma0);
        NsrwmCoverage {
            m0: *self.m0.get_or_insert(d.m0),
            m1: *self.m1.get_or_insert(d.m1),
            eps0: *self.eps0.get_or_insert(d.eps0),
        }
    }

    pub fn fill_mixture(&mut self, center: &[f64], cov: &SymMatrix, m: usize) -> MixtureCoverage {
        let d = MixtureCoverage::around(center, cov, m);
        MixtureCoverage {
            m0: *self.m0.get_or_insert(d.m0),
            m1: *self.m1.get_or_insert(d.m1),
            eps0: *self.eps0.get_or_insert(d.eps0),
            f0: *self.f0.get_or_insert(d.f0),
        }
    }
}

/// Means spaced two standard deviations apart along the first axis, centred on
/// `center`: `center + (j − (m−1)/2) · √Γ₁₁ · e₁`.
pub fn default_init_means(center: &[f64], cov: &SymMatrix, m: usize) -> Vec<Vec<f64>> {
    let sd = cov.get(0, 0).sqrt();
    (0..m)
        .map(|j| {
            let mut mu = center.to_vec();
            mu[0] += (j as f64 - (m as f64 - 1.0) / 2.0) * 2.0 * sd;
            mu
        })
        .collect()
}
