//! Covariance adaptation for the Gaussian random-walk sampler.
//!
//! The parameter is `θ = (μ, Γ)`; the random walk proposes with covariance
//! `λΓ`. The update field is `H(θ, x) = (x − μ, (x − μ)(x − μ)ᵀ − Γ)`, so
//! `θ + γH(θ, x)` is the running mean/covariance recursion with the *old* mean
//! in the covariance term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::SrwmKernel;
use crate::linalg::{self, SymMatrix};
use crate::target::TargetModel;

/// `θ = (μ, Γ)`. Also used for increments, which need not be positive definite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NsrwmParam {
    pub mu: Vec<f64>,
    pub gamma: SymMatrix,
}

impl NsrwmParam {
    pub fn new(mu: Vec<f64>, gamma: SymMatrix) -> Result<Self> {
        if mu.len() != gamma.dim() {
            return Err(Error::DimensionMismatch { expected: gamma.dim(), found: mu.len() });
        }
        Ok(Self { mu, gamma })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// `self + step · inc`; `Γ` is re-symmetrized.
    pub fn apply(&self, step: f64, inc: &NsrwmParam) -> NsrwmParam {
        NsrwmParam {
            mu: self.mu.iter().zip(&inc.mu).map(|(a, b)| a + step * b).collect(),
            gamma: self.gamma.add_scaled(step, &inc.gamma),
        }
    }

    /// `μ` followed by `Γ` row-major.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.mu.clone();
        out.extend_from_slice(self.gamma.as_slice());
        out
    }

    /// Inverse of [`NsrwmParam::flatten`].
    pub fn unflatten(dim: usize, values: &[f64]) -> Result<Self> {
        if values.len() != dim + dim * dim {
            return Err(Error::DimensionMismatch { expected: dim + dim * dim, found: values.len() });
        }
        Self::new(values[..dim].to_vec(), SymMatrix::new(dim, values[dim..].to_vec())?)
    }

    pub fn is_finite(&self) -> bool {
        self.mu.iter().all(|v| v.is_finite()) && self.gamma.is_finite()
    }
}

/// Default proposal scaling `2.38² / n_x`.
pub fn default_lambda(dim: usize) -> f64 {
    2.38 * 2.38 / dim as f64
}

/// `H(θ, x)`.
pub fn update_field(theta: &NsrwmParam, x: &[f64]) -> NsrwmParam {
    let d = linalg::sub(x, &theta.mu);
    let gamma = SymMatrix::outer(&d).sub(&theta.gamma);
    NsrwmParam { mu: d, gamma }
}

/// Closed-form `h(θ) = (μ_π − μ, (μ_π − μ)(μ_π − μ)ᵀ + Γ_π − Γ)`.
pub fn mean_field(theta: &NsrwmParam, t: &TargetModel) -> NsrwmParam {
    let (mu_pi, gamma_pi) = t.exact_moments();
    let a = linalg::sub(&mu_pi, &theta.mu);
    let gamma = SymMatrix::outer(&a).add(&gamma_pi).sub(&theta.gamma);
    NsrwmParam { mu: a, gamma }
}

struct LyapunovParts {
    /// `dᵀ Γ⁻¹ d` with `d = μ − μ_π`.
    s: f64,
    /// `dᵀ Γ⁻¹ Γ_π Γ⁻¹ d`.
    s_pi: f64,
    /// `Tr((Γ⁻¹(Γ − Γ_π))²)`.
    tr_sq: f64,
    log_det: f64,
    tr_inv_pi: f64,
}

fn lyapunov_parts(theta: &NsrwmParam, t: &TargetModel) -> Result<LyapunovParts> {
    let (mu_pi, gamma_pi) = t.exact_moments();
    let l = linalg::factorize(&theta.gamma)?;
    let n = theta.dim();
    let d = linalg::sub(&theta.mu, &mu_pi);
    let inv_d = l.solve(&d);
    let s = linalg::dot(&d, &inv_d);
    let s_pi = linalg::dot(&inv_d, &gamma_pi.mul_vec(&inv_d));
    let inv = l.inverse();
    // B = Γ⁻¹ Γ_π
    let b = inv.matmul(&gamma_pi);
    let tr_inv_pi: f64 = (0..n).map(|i| b[i * n + i]).sum();
    // Tr((I − B)²)
    let mut tr_sq = 0.0;
    for i in 0..n {
        for j in 0..n {
            let ij = if i == j { 1.0 } else { 0.0 } - b[i * n + j];
            let ji = if i == j { 1.0 } else { 0.0 } - b[j * n + i];
            tr_sq += ij * ji;
        }
    }
    Ok(LyapunovParts { s, s_pi, tr_sq, log_det: l.log_det(), tr_inv_pi })
}

/// `w(μ, Γ) = log det Γ + (μ − μ_π)ᵀ Γ⁻¹ (μ − μ_π) + Tr(Γ⁻¹ Γ_π)`.
pub fn lyapunov(theta: &NsrwmParam, t: &TargetModel) -> Result<f64> {
    let p = lyapunov_parts(theta, t)?;
    Ok(p.log_det + p.s + p.tr_inv_pi)
}

/// The published closed form of `⟨∇w, h⟩`:
/// `−2 dᵀΓ⁻¹d − Tr(Γ⁻¹(Γ − Γ_π)Γ⁻¹(Γ − Γ_π)) − (dᵀΓ⁻¹d)²`.
///
/// Its first term differs from the exact derivative of [`lyapunov`] along
/// [`mean_field`] unless `Γ = Γ_π` or `μ = μ_π`; see [`lyapunov_decay_exact`].
/// Both are nonpositive and vanish only at `(μ_π, Γ_π)`.
pub fn lyapunov_decay(theta: &NsrwmParam, t: &TargetModel) -> Result<f64> {
    let p = lyapunov_parts(theta, t)?;
    Ok(-2.0 * p.s - p.tr_sq - p.s * p.s)
}

/// Exact directional derivative of [`lyapunov`] along [`mean_field`]:
/// `−2 dᵀΓ⁻¹Γ_πΓ⁻¹d − Tr((Γ⁻¹(Γ − Γ_π))²) − (dᵀΓ⁻¹d)²`.
pub fn lyapunov_decay_exact(theta: &NsrwmParam, t: &TargetModel) -> Result<f64> {
    let p = lyapunov_parts(theta, t)?;
    Ok(-2.0 * p.s_pi - p.tr_sq - p.s * p.s)
}

/// Random-walk kernel with increment covariance `λΓ`.
pub fn kernel_of<'t>(theta: &NsrwmParam, t: &'t TargetModel, lambda: f64) -> Result<SrwmKernel<'t>> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    SrwmKernel::new(t, &theta.gamma.scale(lambda))
}
