//! Metropolis–Hastings transition kernels.
//!
//! Every step consumes randomness in a fixed order: proposal draws first, then
//! exactly one acceptance uniform. Acceptance is `ln U < log α`, so ties reject.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::{self, FactoredGaussian, SymMatrix};
use crate::mixture_em::MixtureXi;
use crate::target::TargetModel;

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub new_x: Vec<f64>,
    pub proposed_x: Vec<f64>,
    pub accepted: bool,
    pub log_accept_prob: f64,
}

/// A π-invariant Markov kernel that can be stepped with an explicit stream.
pub trait MhKernel {
    fn target(&self) -> &TargetModel;

    fn step<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> StepOutcome;
}

fn accept_reject<R: Rng + ?Sized>(x: &[f64], y: Vec<f64>, log_alpha: f64, rng: &mut R) -> StepOutcome {
    let u: f64 = rng.random();
    let accepted = u.ln() < log_alpha;
    StepOutcome {
        new_x: if accepted { y.clone() } else { x.to_vec() },
        proposed_x: y,
        accepted,
        log_accept_prob: log_alpha,
    }
}

/// `min(0, log π(y) − log π(x))`.
pub fn srwm_log_accept(t: &TargetModel, x: &[f64], y: &[f64]) -> f64 {
    let d = t.log_density(y) - t.log_density(x);
    if d.is_nan() {
        f64::NEG_INFINITY
    } else {
        d.min(0.0)
    }
}

/// Symmetric random-walk Metropolis with a zero-mean Gaussian increment.
#[derive(Debug, Clone)]
pub struct SrwmKernel<'t> {
    target: &'t TargetModel,
    increment: FactoredGaussian,
}

impl<'t> SrwmKernel<'t> {
    /// Increment `𝒩(0, cov)`.
    pub fn new(target: &'t TargetModel, cov: &SymMatrix) -> Result<Self> {
        if cov.dim() != target.dim() {
            return Err(Error::DimensionMismatch { expected: target.dim(), found: cov.dim() });
        }
        let increment = FactoredGaussian::new(vec![0.0; target.dim()], cov)?;
        Ok(Self { target, increment })
    }

    pub fn increment(&self) -> &FactoredGaussian {
        &self.increment
    }

    /// Step driven by a caller-supplied standard normal `z` and uniform `u`,
    /// used by probes that need common random numbers across kernels.
    pub fn step_with(&self, x: &[f64], z: &[f64], u: f64) -> StepOutcome {
        let inc = self.increment.transform(z);
        let y: Vec<f64> = x.iter().zip(&inc).map(|(a, b)| a + b).collect();
        let log_alpha = srwm_log_accept(self.target, x, &y);
        let accepted = u.ln() < log_alpha;
        StepOutcome {
            new_x: if accepted { y.clone() } else { x.to_vec() },
            proposed_x: y,
            accepted,
            log_accept_prob: log_alpha,
        }
    }
}

impl MhKernel for SrwmKernel<'_> {
    fn target(&self) -> &TargetModel {
        self.target
    }

    fn step<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> StepOutcome {
        let inc = self.increment.sample(rng);
        let y: Vec<f64> = x.iter().zip(&inc).map(|(a, b)| a + b).collect();
        let log_alpha = srwm_log_accept(self.target, x, &y);
        accept_reject(x, y, log_alpha, rng)
    }
}

/// Which fixed distribution `ζ` backs the adaptive proposal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SafeguardKind {
    #[default]
    Gaussian,
    StudentT,
}

/// Default degrees of freedom of the Student-t safeguard.
pub const STUDENT_T_DOF: f64 = 4.0;

/// The non-adaptive component `ζ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Safeguard {
    Gaussian(FactoredGaussian),
    StudentT { loc_scale: FactoredGaussian, dof: f64, log_norm: f64 },
}

impl Safeguard {
    pub fn gaussian(mean: Vec<f64>, cov: &SymMatrix) -> Result<Self> {
        Ok(Self::Gaussian(FactoredGaussian::new(mean, cov)?))
    }

    pub fn student_t(loc: Vec<f64>, scale: &SymMatrix, dof: f64) -> Result<Self> {
        if !(dof > 0.0) {
            return Err(Error::InvalidParameter("Student-t degrees of freedom must be positive".into()));
        }
        let loc_scale = FactoredGaussian::new(loc, scale)?;
        let d = loc_scale.dim() as f64;
        let log_norm = ln_gamma(0.5 * (dof + d))
            - ln_gamma(0.5 * dof)
            - 0.5 * d * (dof * std::f64::consts::PI).ln()
            - 0.5 * loc_scale.factor().log_det();
        Ok(Self::StudentT { loc_scale, dof, log_norm })
    }

    pub fn build(kind: SafeguardKind, mean: Vec<f64>, cov: &SymMatrix) -> Result<Self> {
        match kind {
            SafeguardKind::Gaussian => Self::gaussian(mean, cov),
            SafeguardKind::StudentT => Self::student_t(mean, cov, STUDENT_T_DOF),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian(g) => g.dim(),
            Self::StudentT { loc_scale, .. } => loc_scale.dim(),
        }
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        match self {
            Self::Gaussian(g) => g.log_pdf(x),
            Self::StudentT { loc_scale, dof, log_norm } => {
                let diff = linalg::sub(x, loc_scale.mean());
                let delta = loc_scale.factor().mahalanobis_sq(&diff);
                let d = loc_scale.dim() as f64;
                log_norm - 0.5 * (dof + d) * (1.0 + delta / dof).ln()
            }
        }
    }

    pub fn grad_log_pdf(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Gaussian(g) => g.grad_log_pdf(x),
            Self::StudentT { loc_scale, dof, .. } => {
                let diff = linalg::sub(x, loc_scale.mean());
                let delta = loc_scale.factor().mahalanobis_sq(&diff);
                let d = loc_scale.dim() as f64;
                let s = (dof + d) / (dof + delta);
                loc_scale.factor().solve(&diff).into_iter().map(|v| -s * v).collect()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Self::Gaussian(g) => g.sample(rng),
            Self::StudentT { loc_scale, dof, .. } => {
                let z = linalg::standard_normal_vec(rng, loc_scale.dim());
                let w = ChiSquared::new(*dof).expect("positive dof").sample(rng);
                let s = (dof / w).sqrt();
                let scaled: Vec<f64> = z.into_iter().map(|v| v * s).collect();
                loc_scale.transform(&scaled)
            }
        }
    }
}

/// `q = (1 − ι)·q̃_ξ + ι·ζ`.
#[derive(Debug, Clone)]
pub struct MixtureProposal {
    xi: MixtureXi,
    safeguard: Safeguard,
    iota: f64,
    log_adaptive_weight: f64,
    log_iota: f64,
}

impl MixtureProposal {
    pub fn new(xi: MixtureXi, safeguard: Safeguard, iota: f64) -> Result<Self> {
        if !(iota > 0.0 && iota < 1.0) {
            return Err(Error::InvalidParameter(format!("iota {iota} out of (0,1)")));
        }
        if xi.dim() != safeguard.dim() {
            return Err(Error::DimensionMismatch { expected: xi.dim(), found: safeguard.dim() });
        }
        Ok(Self { xi, safeguard, iota, log_adaptive_weight: (-iota).ln_1p(), log_iota: iota.ln() })
    }

    pub fn xi(&self) -> &MixtureXi {
        &self.xi
    }

    pub fn safeguard(&self) -> &Safeguard {
        &self.safeguard
    }

    pub fn iota(&self) -> f64 {
        self.iota
    }

    pub fn dim(&self) -> usize {
        self.xi.dim()
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let adaptive = self.xi.log_pdf(x);
        linalg::log_sum_exp(&[
            self.log_adaptive_weight + adaptive,
            self.log_iota + self.safeguard.log_pdf(x),
        ])
    }

    pub fn grad_log_pdf(&self, x: &[f64]) -> Vec<f64> {
        let la = self.log_adaptive_weight + self.xi.log_pdf(x);
        let ls = self.log_iota + self.safeguard.log_pdf(x);
        let lse = linalg::log_sum_exp(&[la, ls]);
        let (ra, rs) = ((la - lse).exp(), (ls - lse).exp());
        self.xi
            .grad_log_pdf(x)
            .into_iter()
            .zip(self.safeguard.grad_log_pdf(x))
            .map(|(a, s)| ra * a + rs * s)
            .collect()
    }

    /// Indicator uniform, then (adaptive branch only) a component uniform,
    /// then the component draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        if u < self.iota {
            self.safeguard.sample(rng)
        } else {
            self.xi.sample(rng)
        }
    }
}

/// `min(0, [log π(y) − log q(y)] − [log π(x) − log q(x)])`.
pub fn imh_log_accept(t: &TargetModel, p: &MixtureProposal, x: &[f64], y: &[f64]) -> f64 {
    let wy = t.log_density(y) - p.log_pdf(y);
    let wx = t.log_density(x) - p.log_pdf(x);
    let d = wy - wx;
    if d.is_nan() {
        f64::NEG_INFINITY
    } else {
        d.min(0.0)
    }
}

/// Independence Metropolis–Hastings with a safeguarded mixture proposal.
#[derive(Debug, Clone)]
pub struct ImhKernel<'t> {
    target: &'t TargetModel,
    proposal: MixtureProposal,
}

impl<'t> ImhKernel<'t> {
    pub fn new(target: &'t TargetModel, proposal: MixtureProposal) -> Result<Self> {
        if proposal.dim() != target.dim() {
            return Err(Error::DimensionMismatch { expected: target.dim(), found: proposal.dim() });
        }
        Ok(Self { target, proposal })
    }

    pub fn proposal(&self) -> &MixtureProposal {
        &self.proposal
    }
}

impl MhKernel for ImhKernel<'_> {
    fn target(&self) -> &TargetModel {
        self.target
    }

    fn step<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> StepOutcome {
        let y = self.proposal.sample(rng);
        let log_alpha = imh_log_accept(self.target, &self.proposal, x, &y);
        accept_reject(x, y, log_alpha, rng)
    }
}
