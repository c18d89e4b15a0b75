//! Target distributions with exact moments and exact samplers.
//!
//! Log densities are normalized for every shipped kind, so they can also serve
//! as ground truth for KL estimation. Samplers should still only rely on
//! differences of log densities.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, FactoredGaussian, SymMatrix};

/// Declarative description of a target, as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Gaussian { mean: Vec<f64>, cov: SymMatrix },
    GaussianMixture { weights: Vec<f64>, means: Vec<Vec<f64>>, covs: Vec<SymMatrix> },
}

#[derive(Debug, Clone, PartialEq)]
struct Component {
    log_weight: f64,
    weight: f64,
    cov: SymMatrix,
    dist: FactoredGaussian,
}

/// Immutable target model `π`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetModel {
    spec: TargetSpec,
    dim: usize,
    components: Vec<Component>,
}

impl TargetModel {
    pub fn new(spec: TargetSpec) -> Result<Self> {
        let components = match &spec {
            TargetSpec::Gaussian { mean, cov } => {
                vec![Component {
                    log_weight: 0.0,
                    weight: 1.0,
                    cov: cov.clone(),
                    dist: FactoredGaussian::new(mean.clone(), cov)?,
                }]
            }
            TargetSpec::GaussianMixture { weights, means, covs } => {
                if weights.is_empty() {
                    return Err(Error::InvalidParameter("mixture needs at least one component".into()));
                }
                if means.len() != weights.len() || covs.len() != weights.len() {
                    return Err(Error::DimensionMismatch {
                        expected: weights.len(),
                        found: means.len().min(covs.len()),
                    });
                }
                if weights.iter().any(|w| !(*w > 0.0)) {
                    return Err(Error::InvalidParameter("mixture weights must be positive".into()));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "mixture weights sum to {total}, not 1"
                    )));
                }
                weights
                    .iter()
                    .zip(means)
                    .zip(covs)
                    .map(|((w, m), c)| {
                        Ok(Component {
                            log_weight: w.ln(),
                            weight: *w,
                            cov: c.clone(),
                            dist: FactoredGaussian::new(m.clone(), c)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        let dim = components[0].dist.dim();
        if components.iter().any(|c| c.dist.dim() != dim) {
            return Err(Error::InvalidParameter("mixture components differ in dimension".into()));
        }
        Ok(Self { spec, dim, components })
    }

    pub fn gaussian(mean: Vec<f64>, cov: SymMatrix) -> Result<Self> {
        Self::new(TargetSpec::Gaussian { mean, cov })
    }

    pub fn mixture(weights: Vec<f64>, means: Vec<Vec<f64>>, covs: Vec<SymMatrix>) -> Result<Self> {
        Self::new(TargetSpec::GaussianMixture { weights, means, covs })
    }

    pub fn component_means(&self) -> Vec<Vec<f64>> {
        self.components.iter().map(|c| c.dist.mean().to_vec()).collect()
    }

    pub fn spec(&self) -> &TargetSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        if let [only] = self.components.as_slice() {
            return only.dist.log_pdf(x);
        }
        let terms: Vec<f64> =
            self.components.iter().map(|c| c.log_weight + c.dist.log_pdf(x)).collect();
        linalg::log_sum_exp(&terms)
    }

    pub fn grad_log_density(&self, x: &[f64]) -> Vec<f64> {
        if let [only] = self.components.as_slice() {
            return only.dist.grad_log_pdf(x);
        }
        let terms: Vec<f64> =
            self.components.iter().map(|c| c.log_weight + c.dist.log_pdf(x)).collect();
        let lse = linalg::log_sum_exp(&terms);
        let mut grad = vec![0.0; self.dim];
        for (c, t) in self.components.iter().zip(&terms) {
            let r = (t - lse).exp();
            for (g, v) in grad.iter_mut().zip(c.dist.grad_log_pdf(x)) {
                *g += r * v;
            }
        }
        grad
    }

    /// Exact mean and covariance (law of total variance for mixtures).
    pub fn exact_moments(&self) -> (Vec<f64>, SymMatrix) {
        let n = self.dim;
        let mut mu = vec![0.0; n];
        for c in &self.components {
            for (m, v) in mu.iter_mut().zip(c.dist.mean()) {
                *m += c.weight * v;
            }
        }
        let mut second = vec![0.0; n * n];
        for c in &self.components {
            let m = c.dist.mean();
            for i in 0..n {
                for j in 0..n {
                    second[i * n + j] += c.weight * (c.cov.get(i, j) + m[i] * m[j]);
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                second[i * n + j] -= mu[i] * mu[j];
            }
        }
        (mu, SymMatrix::symmetrized(n, second))
    }

    /// One i.i.d. draw: component index (one uniform) then the Gaussian.
    pub fn exact_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let c = if self.components.len() == 1 {
            &self.components[0]
        } else {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = self.components.last().expect("nonempty");
            for c in &self.components {
                acc += c.weight;
                if u < acc {
                    chosen = c;
                    break;
                }
            }
            chosen
        };
        c.dist.sample(rng)
    }

    /// `⟨x/|x|, ∇ log π(x)⟩` at `x = r·d` for every direction and radius.
    ///
    /// Directions are normalized here. The result is indexed
    /// `[direction][radius]`; it is a report, not a verdict.
    pub fn superexp_probe(&self, directions: &[Vec<f64>], radii: &[f64]) -> Vec<Vec<f64>> {
        directions
            .iter()
            .map(|d| {
                let len = linalg::norm(d);
                let unit: Vec<f64> = d.iter().map(|v| v / len).collect();
                radii
                    .iter()
                    .map(|r| {
                        let x: Vec<f64> = unit.iter().map(|u| u * r).collect();
                        linalg::dot(&unit, &self.grad_log_density(&x))
                    })
                    .collect()
            })
            .collect()
    }

    /// `(log sup π, argmax)`. Exact for a Gaussian; for mixtures the best of a
    /// mean-shift ascent started from every component mean.
    pub fn log_sup_density(&self) -> (f64, Vec<f64>) {
        if let [only] = self.components.as_slice() {
            let m = only.dist.mean().to_vec();
            return (only.dist.log_pdf(&m), m);
        }
        let precisions: Vec<SymMatrix> = self
            .components
            .iter()
            .map(|c| c.dist.factor().inverse())
            .collect();
        let mut best = (f64::NEG_INFINITY, Vec::new());
        for start in self.components.iter().map(|c| c.dist.mean().to_vec()) {
            let x = self.mean_shift_ascent(start, &precisions);
            let v = self.log_density(&x);
            if v > best.0 {
                best = (v, x);
            }
        }
        best
    }

    fn mean_shift_ascent(&self, mut x: Vec<f64>, precisions: &[SymMatrix]) -> Vec<f64> {
        let n = self.dim;
        for _ in 0..10_000 {
            let terms: Vec<f64> =
                self.components.iter().map(|c| c.log_weight + c.dist.log_pdf(&x)).collect();
            let lse = linalg::log_sum_exp(&terms);
            let mut a = vec![0.0; n * n];
            let mut b = vec![0.0; n];
            for ((c, t), p) in self.components.iter().zip(&terms).zip(precisions) {
                let r = (t - lse).exp();
                for (ai, pi) in a.iter_mut().zip(p.as_slice()) {
                    *ai += r * pi;
                }
                for (bi, v) in b.iter_mut().zip(p.mul_vec(c.dist.mean())) {
                    *bi += r * v;
                }
            }
            let a = SymMatrix::symmetrized(n, a);
            let next = match a.inverse() {
                Ok(inv) => inv.mul_vec(&b),
                Err(_) => return x,
            };
            let step = linalg::norm(&linalg::sub(&next, &x));
            x = next;
            if step < 1e-13 * (1.0 + linalg::norm(&x)) {
                break;
            }
        }
        x
    }

    /// One-dimensional marginal of coordinate `i` as `(weight, mean, variance)` triples.
    pub fn marginal(&self, i: usize) -> Vec<(f64, f64, f64)> {
        self.components
            .iter()
            .map(|c| (c.weight, c.dist.mean()[i], c.cov.get(i, i)))
            .collect()
    }

    /// `E_π[g(x_i)]` by trapezoid quadrature on the exact marginal.
    pub fn marginal_expectation(&self, i: usize, g: impl Fn(f64) -> f64) -> f64 {
        self.marginal(i)
            .into_iter()
            .map(|(w, m, v)| {
                let s = v.sqrt();
                let (a, b, n) = (m - 14.0 * s, m + 14.0 * s, 40_001usize);
                let h = (b - a) / (n - 1) as f64;
                let norm = 1.0 / (s * (2.0 * std::f64::consts::PI).sqrt());
                let total: f64 = (0..n)
                    .map(|k| {
                        let x = a + k as f64 * h;
                        let wt = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
                        let z = (x - m) / s;
                        wt * g(x) * norm * (-0.5 * z * z).exp()
                    })
                    .sum();
                w * total * h
            })
            .sum()
    }
}
