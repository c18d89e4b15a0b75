//! Gaussian-mixture machinery for the adaptive independence sampler: E-step
//! responsibilities, sufficient statistics, the floored M-step, the online-EM
//! update field and Monte Carlo KL estimation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, FactoredGaussian, SymMatrix};
use crate::target::TargetModel;

/// Mixture parameter `ξ = (w_j, m_j, C_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureXi {
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    covs: Vec<SymMatrix>,
    components: Vec<FactoredGaussian>,
    floored: bool,
}

impl MixtureXi {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, covs: Vec<SymMatrix>) -> Result<Self> {
        let m = weights.len();
        if m == 0 || means.len() != m || covs.len() != m {
            return Err(Error::InvalidParameter(
                "mixture needs matching, nonempty weights/means/covariances".into(),
            ));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidParameter("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("mixture weights sum to {total}")));
        }
        let dim = means[0].len();
        let components = means
            .into_iter()
            .zip(&covs)
            .map(|(mean, cov)| {
                if mean.len() != dim || cov.dim() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: mean.len() });
                }
                FactoredGaussian::new(mean, cov)
            })
            .collect::<Result<Vec<_>>>()?;
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self { weights, log_weights, covs, components, floored: false })
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self, j: usize) -> &[f64] {
        self.components[j].mean()
    }

    pub fn cov(&self, j: usize) -> &SymMatrix {
        &self.covs[j]
    }

    /// True when an M-step floor changed the maximizer.
    pub fn floored(&self) -> bool {
        self.floored
    }

    fn joint_log_terms(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .zip(&self.log_weights)
            .map(|(c, lw)| lw + c.log_pdf(x))
            .collect()
    }

    /// `log q̃_ξ(x)`.
    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        linalg::log_sum_exp(&self.joint_log_terms(x))
    }

    pub fn grad_log_pdf(&self, x: &[f64]) -> Vec<f64> {
        let r = self.responsibilities(x);
        let mut g = vec![0.0; self.dim()];
        for (rj, c) in r.iter().zip(&self.components) {
            for (gi, v) in g.iter_mut().zip(c.grad_log_pdf(x)) {
                *gi += rj * v;
            }
        }
        g
    }

    /// Posterior component probabilities at `x`.
    pub fn responsibilities(&self, x: &[f64]) -> Vec<f64> {
        let terms = self.joint_log_terms(x);
        let lse = linalg::log_sum_exp(&terms);
        let mut r: Vec<f64> = terms.iter().map(|t| (t - lse).exp()).collect();
        let s: f64 = r.iter().sum();
        r.iter_mut().for_each(|v| *v /= s);
        r
    }

    /// Component uniform, then the component's Gaussian draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let j = if self.weights.len() == 1 {
            0
        } else {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut j = self.weights.len() - 1;
            for (i, w) in self.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    j = i;
                    break;
                }
            }
            j
        };
        self.components[j].sample(rng)
    }
}

/// Per-component `(s0, s1, s2)` = (mass, first moment, second moment).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSuffStats {
    pub s0: Vec<f64>,
    pub s1: Vec<Vec<f64>>,
    pub s2: Vec<SymMatrix>,
}

impl MixtureSuffStats {
    pub fn n_components(&self) -> usize {
        self.s0.len()
    }

    pub fn dim(&self) -> usize {
        self.s1[0].len()
    }

    /// Statistics whose M-step image is exactly `xi` (before floors).
    pub fn from_xi(xi: &MixtureXi) -> Self {
        let m = xi.n_components();
        let mut s0 = Vec::with_capacity(m);
        let mut s1 = Vec::with_capacity(m);
        let mut s2 = Vec::with_capacity(m);
        for j in 0..m {
            let w = xi.weights[j];
            let mean = xi.mean(j);
            s0.push(w);
            s1.push(mean.iter().map(|v| w * v).collect());
            s2.push(xi.cov(j).add(&SymMatrix::outer(mean)).scale(w));
        }
        Self { s0, s1, s2 }
    }

    /// `self + γ · inc`.
    pub fn add_scaled(&self, gamma: f64, inc: &Self) -> Self {
        Self {
            s0: self.s0.iter().zip(&inc.s0).map(|(a, b)| a + gamma * b).collect(),
            s1: self
                .s1
                .iter()
                .zip(&inc.s1)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + gamma * y).collect())
                .collect(),
            s2: self.s2.iter().zip(&inc.s2).map(|(a, b)| a.add_scaled(gamma, b)).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add_scaled(-1.0, other)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            s0: self.s0.iter().map(|v| v * s).collect(),
            s1: self.s1.iter().map(|v| v.iter().map(|x| x * s).collect()).collect(),
            s2: self.s2.iter().map(|m| m.scale(s)).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        self.scale(0.0)
    }

    /// Component mean `s1/s0`.
    pub fn component_mean(&self, j: usize) -> Vec<f64> {
        self.s1[j].iter().map(|v| v / self.s0[j]).collect()
    }

    /// Unfloored component covariance `s2/s0 − m mᵀ`.
    pub fn component_cov(&self, j: usize) -> SymMatrix {
        let mean = self.component_mean(j);
        self.s2[j].scale(1.0 / self.s0[j]).sub(&SymMatrix::outer(&mean))
    }

    /// Flattened `(s0_j, s1_j, s2_j row-major)` blocks, component by component.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for j in 0..self.n_components() {
            out.push(self.s0[j]);
            out.extend_from_slice(&self.s1[j]);
            out.extend_from_slice(self.s2[j].as_slice());
        }
        out
    }

    /// Inverse of [`MixtureSuffStats::flatten`] for `m` components in dimension `dim`.
    pub fn unflatten(m: usize, dim: usize, values: &[f64]) -> Result<Self> {
        let block = 1 + dim + dim * dim;
        if values.len() != m * block {
            return Err(Error::DimensionMismatch { expected: m * block, found: values.len() });
        }
        let mut out = Self { s0: Vec::with_capacity(m), s1: Vec::with_capacity(m), s2: Vec::with_capacity(m) };
        for chunk in values.chunks(block) {
            out.s0.push(chunk[0]);
            out.s1.push(chunk[1..1 + dim].to_vec());
            out.s2.push(SymMatrix::new(dim, chunk[1 + dim..].to_vec())?);
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.s0.iter().all(|v| v.is_finite())
            && self.s1.iter().flatten().all(|v| v.is_finite())
            && self.s2.iter().all(SymMatrix::is_finite)
    }
}

/// Floors that keep the M-step image inside a compact set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MstepFloors {
    pub weight_floor: f64,
    pub cov_floor: f64,
}

impl MstepFloors {
    /// `weight_floor = 1e-3/m`, `cov_floor = 1e-4 · scale`.
    pub fn defaults(m: usize, scale: f64) -> Self {
        Self { weight_floor: 1e-3 / m as f64, cov_floor: 1e-4 * scale }
    }
}

/// Posterior probabilities of component membership.
pub fn responsibilities(xi: &MixtureXi, x: &[f64]) -> Vec<f64> {
    xi.responsibilities(x)
}

/// `ν_ξ T(x)`: per component `(r_j, r_j x, r_j x xᵀ)`.
pub fn suffstat_expectation(xi: &MixtureXi, x: &[f64]) -> MixtureSuffStats {
    let r = xi.responsibilities(x);
    let xx = SymMatrix::outer(x);
    MixtureSuffStats {
        s1: r.iter().map(|rj| x.iter().map(|v| rj * v).collect()).collect(),
        s2: r.iter().map(|rj| xx.scale(*rj)).collect(),
        s0: r,
    }
}

/// Raises weights below `floor` to `floor` and rescales the others so the
/// total stays 1. Returns whether anything changed.
fn floor_weights(w: &mut [f64], floor: f64) -> bool {
    let m = w.len();
    if floor * m as f64 >= 1.0 {
        w.iter_mut().for_each(|v| *v = 1.0 / m as f64);
        return true;
    }
    let mut pinned = vec![false; m];
    let mut changed = false;
    loop {
        let mut new_pin = false;
        for j in 0..m {
            if !pinned[j] && w[j] < floor {
                pinned[j] = true;
                new_pin = true;
            }
        }
        if !new_pin {
            break;
        }
        changed = true;
        let free_mass = 1.0 - floor * pinned.iter().filter(|p| **p).count() as f64;
        let free_total: f64 = (0..m).filter(|j| !pinned[*j]).map(|j| w[j]).sum();
        for j in 0..m {
            w[j] = if pinned[j] { floor } else { w[j] * free_mass / free_total };
        }
    }
    changed
}

/// Closed-form maximizer `ξ̂(θ)` with floors applied.
pub fn mstep(theta: &MixtureSuffStats, floors: &MstepFloors) -> Result<MixtureXi> {
    let m = theta.n_components();
    for (j, s0) in theta.s0.iter().enumerate() {
        if !(*s0 > 0.0) || !s0.is_finite() {
            return Err(Error::DegenerateComponent { component: j });
        }
    }
    let total: f64 = theta.s0.iter().sum();
    let mut weights: Vec<f64> = theta.s0.iter().map(|v| v / total).collect();
    let mut floored = floor_weights(&mut weights, floors.weight_floor);
    let mut means = Vec::with_capacity(m);
    let mut covs = Vec::with_capacity(m);
    for j in 0..m {
        let mean = theta.component_mean(j);
        let raw = theta.component_cov(j);
        if !raw.is_finite() || mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateComponent { component: j });
        }
        let (cov, clamped) = linalg::clamp_eigenvalues(&raw, floors.cov_floor);
        floored |= clamped;
        means.push(mean);
        covs.push(cov);
    }
    let mut xi = MixtureXi::new(weights, means, covs)?;
    xi.floored = floored;
    Ok(xi)
}

/// `H(θ, x) = ν_{ξ̂(θ)} T(x) − θ`.
pub fn em_update_field(
    theta: &MixtureSuffStats,
    x: &[f64],
    floors: &MstepFloors,
) -> Result<MixtureSuffStats> {
    let xi = mstep(theta, floors)?;
    Ok(suffstat_expectation(&xi, x).sub(theta))
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        Self { estimate: mean, std_error: (var / n).sqrt() }
    }
}

/// `K(π ‖ q̃_ξ)` from `n` exact draws of `π`. Requires a normalized target.
pub fn kl_estimate<R: Rng + ?Sized>(t: &TargetModel, xi: &MixtureXi, n: usize, rng: &mut R) -> Estimate {
    let draws: Vec<Vec<f64>> = (0..n).map(|_| t.exact_sample(rng)).collect();
    kl_estimate_on(t, xi, &draws)
}

/// KL estimate on caller-supplied draws from `π` (common random numbers).
pub fn kl_estimate_on(t: &TargetModel, xi: &MixtureXi, draws: &[Vec<f64>]) -> Estimate {
    let values: Vec<f64> = draws.iter().map(|x| t.log_density(x) - xi.log_pdf(x)).collect();
    Estimate::from_values(&values)
}

/// One batch EM iteration on fixed data: average `ν_ξ T` then M-step.
pub fn batch_em_step(xi: &MixtureXi, data: &[Vec<f64>], floors: &MstepFloors) -> Result<MixtureXi> {
    let mut acc = suffstat_expectation(xi, &data[0]).zeros_like();
    for x in data {
        acc = acc.add_scaled(1.0, &suffstat_expectation(xi, x));
    }
    mstep(&acc.scale(1.0 / data.len() as f64), floors)
}

pub fn average_log_likelihood(xi: &MixtureXi, data: &[Vec<f64>]) -> f64 {
    data.iter().map(|x| xi.log_pdf(x)).sum::<f64>() / data.len() as f64
}
