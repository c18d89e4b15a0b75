//! The homogeneous adaptive chain `Z_k = (X_k, θ_k, κ_k, ν_k)`.
//!
//! `κ` indexes the active truncation set and `ν` counts steps since the last
//! reinitialization. A transition with `ν = 0` restarts from the fixed reset
//! pair, then draws `X' ~ P_θ(x, ·)` and forms `θ' = θ + γ H(θ, X')` with
//! `γ = c0 / (κ + shift + ν + 1)^α`. If `θ'` leaves `𝒦_κ` (or the field is
//! degenerate) the chain moves to `κ + 1` and sets `ν = 0`; the restart itself
//! happens at the start of the next transition.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{MhKernel, StepOutcome};
use crate::linalg::{self, SymMatrix};
use crate::mixture_em::MixtureSuffStats;
use crate::nsrwm::NsrwmParam;

/// `γ_k = c0 / (k + shift)^α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepsizeSchedule {
    c0: f64,
    alpha: f64,
    shift: u64,
}

impl StepsizeSchedule {
    /// Rejects exponents outside `(1/2, 1]`, where either `Σγ_k` converges or
    /// `Σ(γ_k² + k^{-1/2}γ_k)` diverges.
    pub fn new(c0: f64, alpha: f64) -> Result<Self> {
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(Error::InvalidParameter(format!("stepsize c0 must be positive, got {c0}")));
        }
        if !(alpha > 0.5 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "stepsize exponent alpha = {alpha} outside (1/2, 1]: need sum gamma_k = inf and \
                 sum (gamma_k^2 + k^-1/2 gamma_k) < inf"
            )));
        }
        Ok(Self { c0, alpha, shift: 0 })
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn shift(&self) -> u64 {
        self.shift
    }

    /// The shifted sequence `γ^{←l}`, i.e. `k ↦ γ_{k+l}`.
    pub fn shifted(&self, l: u64) -> Self {
        Self { shift: self.shift + l, ..*self }
    }

    pub fn gamma_at(&self, k: u64) -> f64 {
        assert!(k >= 1, "stepsize index starts at 1");
        self.c0 / ((k + self.shift) as f64).powf(self.alpha)
    }
}

impl Default for StepsizeSchedule {
    /// `γ_k = 0.5 / k^0.7`.
    fn default() -> Self {
        Self { c0: 0.5, alpha: 0.7, shift: 0 }
    }
}

/// Nested compact sets `𝒦_0 ⊂ 𝒦_1 ⊂ …` exhausting the parameter space.
pub trait CompactCoverage<P> {
    fn contains(&self, q: u32, theta: &P) -> bool;
}

#[inline]
fn level_factor(q: u32) -> f64 {
    2f64.powi(q as i32)
}

/// `𝒦_q = {(μ, Γ): |μ| ≤ M₀2^q, λ_min(Γ) ≥ ε₀2^{−q}, λ_max(Γ) ≤ M₁2^q}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NsrwmCoverage {
    pub m0: f64,
    pub m1: f64,
    pub eps0: f64,
}

impl NsrwmCoverage {
    /// `M₀ = 10(1 + |μ₀|)`, `M₁ = 100 λ_max(Γ₀)`, `ε₀ = 10⁻² λ_min(Γ₀)`.
    pub fn around(mu0: &[f64], gamma0: &SymMatrix) -> Self {
        let (lo, hi) = linalg::eigen_bounds(gamma0);
        Self { m0: 10.0 * (1.0 + linalg::norm(mu0)), m1: 100.0 * hi, eps0: 1e-2 * lo }
    }
}

impl CompactCoverage<NsrwmParam> for NsrwmCoverage {
    fn contains(&self, q: u32, theta: &NsrwmParam) -> bool {
        if !theta.is_finite() {
            return false;
        }
        let f = level_factor(q);
        if !(linalg::norm(&theta.mu) <= self.m0 * f) {
            return false;
        }
        let (lo, hi) = linalg::eigen_bounds(&theta.gamma);
        lo >= self.eps0 / f && hi <= self.m1 * f
    }
}

/// Per component `j`: `s0_j ≥ f₀2^{−q}`, `|s1_j/s0_j| ≤ M₀2^q` and the
/// eigenvalues of `s2_j/s0_j − m_j m_jᵀ` within `[ε₀2^{−q}, M₁2^q]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureCoverage {
    pub m0: f64,
    pub m1: f64,
    pub eps0: f64,
    pub f0: f64,
}

impl MixtureCoverage {
    /// Same geometry as [`NsrwmCoverage::around`] plus `f₀ = 0.5/m`.
    pub fn around(mu0: &[f64], gamma0: &SymMatrix, m: usize) -> Self {
        let base = NsrwmCoverage::around(mu0, gamma0);
        Self { m0: base.m0, m1: base.m1, eps0: base.eps0, f0: 0.5 / m as f64 }
    }
}

impl CompactCoverage<MixtureSuffStats> for MixtureCoverage {
    fn contains(&self, q: u32, theta: &MixtureSuffStats) -> bool {
        if !theta.is_finite() {
            return false;
        }
        let f = level_factor(q);
        (0..theta.n_components()).all(|j| {
            let s0 = theta.s0[j];
            if !(s0 >= self.f0 / f) {
                return false;
            }
            if !(linalg::norm(&theta.component_mean(j)) <= self.m0 * f) {
                return false;
            }
            let (lo, hi) = linalg::eigen_bounds(&theta.component_cov(j));
            lo >= self.eps0 / f && hi <= self.m1 * f
        })
    }
}

/// A kernel family `{P_θ}` paired with an update field `H`.
pub trait AdaptiveScheme: Sync {
    type Param: Clone + Send + Sync;
    type Kernel<'a>: MhKernel
    where
        Self: 'a;

    fn dim(&self) -> usize;

    fn kernel(&self, theta: &Self::Param) -> Result<Self::Kernel<'_>>;

    /// `θ + step · H(θ, x)`. `kernel` is the kernel built from `θ`, passed so
    /// schemes can reuse quantities derived from `θ`.
    fn update(&self, theta: &Self::Param, kernel: &Self::Kernel<'_>, x: &[f64], step: f64)
        -> Result<Self::Param>;

    fn in_coverage(&self, q: u32, theta: &Self::Param) -> bool;

    /// Row-major flattening used by traces.
    fn flatten(&self, theta: &Self::Param) -> Vec<f64>;
}

/// Current state of the homogeneous chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState<P> {
    pub x: Vec<f64>,
    /// On exit steps this is the tentative parameter (or the previous one if
    /// the update was degenerate); it is never used for sampling because the
    /// next transition restarts from the reset pair.
    pub theta: P,
    pub kappa: u32,
    pub nu: u64,
}

/// What happened during one transition.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<P> {
    pub outcome: StepOutcome,
    pub step: f64,
    /// Tentative `θ'`; `None` when the update was degenerate (cemetery).
    pub candidate: Option<P>,
    pub exited: bool,
    pub restarted: bool,
}

/// Fixed reset pair `Π(·) = (x₀, θ₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResetPoint<P> {
    x0: Vec<f64>,
    theta0: P,
}

impl<P: Clone> ResetPoint<P> {
    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn theta0(&self) -> &P {
        &self.theta0
    }

    /// `Π`: ignores its argument.
    pub fn reinit_map(&self, _x: &[f64], _theta: &P) -> (Vec<f64>, P) {
        (self.x0.clone(), self.theta0.clone())
    }
}

/// The adaptive chain with reprojections on randomly varying truncation sets.
#[derive(Debug, Clone)]
pub struct AdaptiveChain<S: AdaptiveScheme> {
    scheme: S,
    schedule: StepsizeSchedule,
    reset: ResetPoint<S::Param>,
}

impl<S: AdaptiveScheme> AdaptiveChain<S> {
    /// Fails unless `θ₀ ∈ 𝒦₀` and `x₀` has the scheme's dimension.
    pub fn new(scheme: S, schedule: StepsizeSchedule, x0: Vec<f64>, theta0: S::Param) -> Result<Self> {
        if x0.len() != scheme.dim() {
            return Err(Error::DimensionMismatch { expected: scheme.dim(), found: x0.len() });
        }
        if !scheme.in_coverage(0, &theta0) {
            return Err(Error::InvalidParameter("initial parameter is outside the first truncation set".into()));
        }
        scheme.kernel(&theta0)?;
        Ok(Self { scheme, schedule, reset: ResetPoint { x0, theta0 } })
    }

    pub fn scheme(&self) -> &S {
        &self.scheme
    }

    pub fn schedule(&self) -> &StepsizeSchedule {
        &self.schedule
    }

    pub fn reset(&self) -> &ResetPoint<S::Param> {
        &self.reset
    }

    /// `Z_0 = (x₀, θ₀, 0, 0)`.
    pub fn initial_state(&self) -> ChainState<S::Param> {
        ChainState { x: self.reset.x0.clone(), theta: self.reset.theta0.clone(), kappa: 0, nu: 0 }
    }

    /// Stepsize used by a transition leaving a state with counters `(κ, ν)`.
    pub fn step_size(&self, kappa: u32, nu: u64) -> f64 {
        self.schedule.shifted(u64::from(kappa)).gamma_at(nu + 1)
    }

    pub fn transition<R: Rng + ?Sized>(
        &self,
        z: &ChainState<S::Param>,
        rng: &mut R,
    ) -> (ChainState<S::Param>, StepRecord<S::Param>) {
        let restarted = z.nu == 0;
        let (x, theta) = if restarted {
            self.reset.reinit_map(&z.x, &z.theta)
        } else {
            (z.x.clone(), z.theta.clone())
        };
        let step = self.step_size(z.kappa, z.nu);

        let kernel = match self.scheme.kernel(&theta) {
            Ok(k) => k,
            Err(_) => {
                // Unreachable for parameters inside a truncation set; treated as an exit.
                let outcome = StepOutcome {
                    new_x: x.clone(),
                    proposed_x: x.clone(),
                    accepted: false,
                    log_accept_prob: f64::NEG_INFINITY,
                };
                let next = ChainState { x, theta, kappa: z.kappa + 1, nu: 0 };
                return (next, StepRecord { outcome, step, candidate: None, exited: true, restarted });
            }
        };
        let outcome = kernel.step(&x, rng);
        let candidate = self.scheme.update(&theta, &kernel, &outcome.new_x, step).ok();
        let inside = candidate.as_ref().is_some_and(|c| self.scheme.in_coverage(z.kappa, c));
        let next = if inside {
            ChainState {
                x: outcome.new_x.clone(),
                theta: candidate.clone().expect("checked"),
                kappa: z.kappa,
                nu: z.nu + 1,
            }
        } else {
            ChainState {
                x: outcome.new_x.clone(),
                theta: candidate.clone().unwrap_or(theta),
                kappa: z.kappa + 1,
                nu: 0,
            }
        };
        (next, StepRecord { outcome, step, candidate, exited: !inside, restarted })
    }

    /// `steps` transitions from the reset state with a stream seeded by `seed`.
    pub fn run(&self, steps: u64, seed: u64, options: &TraceOptions) -> RunTrace {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.run_with(steps, &mut rng, options)
    }

    /// Replicate `r` uses stream `r` of the seed's generator.
    pub fn run_replicate(&self, steps: u64, seed: u64, replicate: u64, options: &TraceOptions) -> RunTrace {
        let mut rng = replicate_rng(seed, replicate);
        self.run_with(steps, &mut rng, options)
    }

    pub fn run_with<R: Rng + ?Sized>(&self, steps: u64, rng: &mut R, options: &TraceOptions) -> RunTrace {
        let mut trace = RunTrace::with_capacity(self.scheme.dim(), steps as usize, options.burn_in);
        let mut z = self.initial_state();
        for k in 1..=steps {
            let (next, record) = self.transition(&z, rng);
            let snapshot = options.theta_cadence > 0 && k % options.theta_cadence == 0;
            let theta_values = if snapshot {
                record.candidate.as_ref().map(|c| self.scheme.flatten(c))
            } else {
                None
            };
            trace.push(k, &next, &record, snapshot, theta_values);
            z = next;
        }
        trace.final_theta = self.scheme.flatten(&z.theta);
        trace.final_kappa = z.kappa;
        trace.final_nu = z.nu;
        trace
    }
}

pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceOptions {
    /// Snapshot `θ` every this many steps; 0 disables snapshots.
    pub theta_cadence: u64,
    /// Number of leading samples diagnostics skip. Adaptation ignores it.
    pub burn_in: u64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self { theta_cadence: 0, burn_in: 0 }
    }
}

/// `θ` recorded after step `k` (`None` values mark the cemetery).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaSnapshot {
    pub k: u64,
    pub kappa: u32,
    pub nu: u64,
    pub theta: Option<Vec<f64>>,
}

/// Per-step record of a run, stored column-wise. Step `k` (1-based) lives at
/// index `k − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    dim: usize,
    burn_in: u64,
    samples: Vec<f64>,
    accepted: Vec<bool>,
    log_accept: Vec<f64>,
    kappa: Vec<u32>,
    nu: Vec<u64>,
    snapshots: Vec<ThetaSnapshot>,
    reinit_steps: Vec<u64>,
    pub final_theta: Vec<f64>,
    pub final_kappa: u32,
    pub final_nu: u64,
}

/// Borrowed view of one trace row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord<'a> {
    pub k: u64,
    pub x: &'a [f64],
    pub accepted: bool,
    pub log_accept: f64,
    pub kappa: u32,
    pub nu: u64,
    pub reinit: bool,
}

impl RunTrace {
    fn with_capacity(dim: usize, n: usize, burn_in: u64) -> Self {
        Self {
            dim,
            burn_in,
            samples: Vec::with_capacity(n * dim),
            accepted: Vec::with_capacity(n),
            log_accept: Vec::with_capacity(n),
            kappa: Vec::with_capacity(n),
            nu: Vec::with_capacity(n),
            snapshots: Vec::new(),
            reinit_steps: Vec::new(),
            final_theta: Vec::new(),
            final_kappa: 0,
            final_nu: 0,
        }
    }

    /// Builds a trace from bare samples (no kernel), e.g. i.i.d. draws used as
    /// a reference chain by diagnostics.
    pub fn from_samples(dim: usize, samples: Vec<f64>, burn_in: u64) -> Self {
        assert_eq!(samples.len() % dim, 0, "samples must be a whole number of rows");
        let n = samples.len() / dim;
        Self {
            dim,
            burn_in,
            samples,
            accepted: vec![true; n],
            log_accept: vec![0.0; n],
            kappa: vec![0; n],
            nu: (1..=n as u64).collect(),
            snapshots: Vec::new(),
            reinit_steps: Vec::new(),
            final_theta: Vec::new(),
            final_kappa: 0,
            final_nu: n as u64,
        }
    }

    fn push<P>(
        &mut self,
        k: u64,
        z: &ChainState<P>,
        record: &StepRecord<P>,
        snapshot: bool,
        theta: Option<Vec<f64>>,
    ) {
        self.samples.extend_from_slice(&z.x);
        self.accepted.push(record.outcome.accepted);
        self.log_accept.push(record.outcome.log_accept_prob);
        self.kappa.push(z.kappa);
        self.nu.push(z.nu);
        if z.nu == 0 {
            self.reinit_steps.push(k);
        }
        if snapshot {
            self.snapshots.push(ThetaSnapshot { k, kappa: z.kappa, nu: z.nu, theta });
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.accepted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accepted.is_empty()
    }

    pub fn burn_in(&self) -> u64 {
        self.burn_in
    }

    /// Sample after step `k` (1-based).
    pub fn x(&self, k: u64) -> &[f64] {
        let i = (k - 1) as usize;
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Rows after the burn-in.
    pub fn retained(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks(self.dim).skip(self.burn_in as usize)
    }

    pub fn records(&self) -> impl Iterator<Item = TraceRecord<'_>> {
        (0..self.len()).map(move |i| TraceRecord {
            k: i as u64 + 1,
            x: &self.samples[i * self.dim..(i + 1) * self.dim],
            accepted: self.accepted[i],
            log_accept: self.log_accept[i],
            kappa: self.kappa[i],
            nu: self.nu[i],
            reinit: self.nu[i] == 0,
        })
    }

    pub fn kappa(&self) -> &[u32] {
        &self.kappa
    }

    pub fn nu(&self) -> &[u64] {
        &self.nu
    }

    pub fn accepted(&self) -> &[bool] {
        &self.accepted
    }

    pub fn snapshots(&self) -> &[ThetaSnapshot] {
        &self.snapshots
    }

    /// Steps `k` whose transition left the active truncation set.
    pub fn reinit_steps(&self) -> &[u64] {
        &self.reinit_steps
    }

    pub fn total_reinits(&self) -> usize {
        self.reinit_steps.len()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted.iter().filter(|a| **a).count() as f64 / self.len().max(1) as f64
    }

    /// Acceptance rate over the last `window` steps.
    pub fn tail_acceptance_rate(&self, window: usize) -> f64 {
        let start = self.len().saturating_sub(window);
        let tail = &self.accepted[start..];
        tail.iter().filter(|a| **a).count() as f64 / tail.len().max(1) as f64
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            steps: self.len() as u64,
            total_reinits: self.total_reinits() as u64,
            final_kappa: self.final_kappa,
            acceptance_rate: self.acceptance_rate(),
            final_theta: self.final_theta.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: u64,
    pub total_reinits: u64,
    pub final_kappa: u32,
    pub acceptance_rate: f64,
    pub final_theta: Vec<f64>,
}
