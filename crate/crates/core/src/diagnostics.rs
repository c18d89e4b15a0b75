//! Empirical checks of the limit theorems and of the drift, minorization and
//! Lipschitz conditions behind them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::controller::{replicate_rng, RunTrace};
use crate::error::{Error, Result};
use crate::kernels::{MhKernel, SrwmKernel};
use crate::linalg::{self, SymMatrix};
use crate::target::TargetModel;

/// Test functions `f` with known `π(f)` for the shipped targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestFunction {
    Const,
    /// `x_i` (0-based index).
    Coord(usize),
    /// `x_i²`.
    Square(usize),
    /// `x_i x_j`.
    Product(usize, usize),
    /// `tanh(x_i)`.
    Tanh(usize),
}

impl TestFunction {
    /// Parses ids such as `x1`, `x2^2`, `x1*x2`, `tanh(x1)`, `const` (1-based).
    pub fn parse(id: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unknown test function {id:?}"));
        let coord = |s: &str| -> Result<usize> {
            let i: usize = s.trim().strip_prefix('x').ok_or_else(bad)?.parse().map_err(|_| bad())?;
            if i == 0 {
                return Err(bad());
            }
            Ok(i - 1)
        };
        let id = id.trim();
        if id == "const" || id == "1" {
            return Ok(Self::Const);
        }
        if let Some(inner) = id.strip_prefix("tanh(").and_then(|s| s.strip_suffix(')')) {
            return Ok(Self::Tanh(coord(inner)?));
        }
        if let Some(base) = id.strip_suffix("^2") {
            return Ok(Self::Square(coord(base)?));
        }
        if let Some((a, b)) = id.split_once('*') {
            return Ok(Self::Product(coord(a)?, coord(b)?));
        }
        Ok(Self::Coord(coord(id)?))
    }

    pub fn id(&self) -> String {
        match *self {
            Self::Const => "const".into(),
            Self::Coord(i) => format!("x{}", i + 1),
            Self::Square(i) => format!("x{}^2", i + 1),
            Self::Product(i, j) => format!("x{}*x{}", i + 1, j + 1),
            Self::Tanh(i) => format!("tanh(x{})", i + 1),
        }
    }

    /// Largest coordinate index used, for dimension checks.
    pub fn max_index(&self) -> Option<usize> {
        match *self {
            Self::Const => None,
            Self::Coord(i) | Self::Square(i) | Self::Tanh(i) => Some(i),
            Self::Product(i, j) => Some(i.max(j)),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Self::Const => 1.0,
            Self::Coord(i) => x[i],
            Self::Square(i) => x[i] * x[i],
            Self::Product(i, j) => x[i] * x[j],
            Self::Tanh(i) => x[i].tanh(),
        }
    }

    /// `sup |f|`, infinite for unbounded functions.
    pub fn sup_abs(&self) -> f64 {
        match self {
            Self::Const | Self::Tanh(_) => 1.0,
            _ => f64::INFINITY,
        }
    }

    /// Exact `π(f)`.
    pub fn exact(&self, t: &TargetModel) -> f64 {
        let (mu, cov) = t.exact_moments();
        match *self {
            Self::Const => 1.0,
            Self::Coord(i) => mu[i],
            Self::Square(i) => cov.get(i, i) + mu[i] * mu[i],
            Self::Product(i, j) => cov.get(i, j) + mu[i] * mu[j],
            Self::Tanh(i) => t.marginal_expectation(i, f64::tanh),
        }
    }
}

impl std::fmt::Display for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicReport {
    pub function: String,
    pub burn_in: u64,
    pub n: u64,
    /// `(n, S_n(f))` at powers of two and at the final length.
    pub checkpoints: Vec<(u64, f64)>,
    pub average: f64,
    pub exact: Option<f64>,
    pub error: Option<f64>,
    /// Batch-means variance of `f` (absent for short traces).
    pub sigma2_bm: Option<f64>,
    /// `5 σ̂_bm / √n`.
    pub tolerance: Option<f64>,
}

impl ErgodicReport {
    /// Whether `|S_n − π(f)|` is within the tolerance. `None` if either is unknown.
    pub fn within_tolerance(&self) -> Option<bool> {
        Some(self.error?.abs() <= self.tolerance?)
    }
}

pub const DEFAULT_BATCHES: usize = 30;

/// `S_n(f) = (1/n) Σ f(X_k)` over `k ∈ (b, n]`, with running values.
pub fn ergodic_average(trace: &RunTrace, f: TestFunction, burn_in: u64, exact: Option<f64>) -> Result<ErgodicReport> {
    let values: Vec<f64> = trace.samples().chunks(trace.dim()).skip(burn_in as usize).map(|x| f.eval(x)).collect();
    if values.is_empty() {
        return Err(Error::InsufficientLength { needed: burn_in as usize + 1, found: trace.len() });
    }
    let mut checkpoints = Vec::new();
    let mut sum = 0.0;
    let mut next = 1usize;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        let n = i + 1;
        if n == next {
            checkpoints.push((n as u64, sum / n as f64));
            next *= 2;
        }
    }
    let n = values.len();
    if checkpoints.last().map(|c| c.0) != Some(n as u64) {
        checkpoints.push((n as u64, sum / n as f64));
    }
    let average = sum / n as f64;
    let sigma2_bm = batch_means_of(&values, DEFAULT_BATCHES).ok();
    Ok(ErgodicReport {
        function: f.id(),
        burn_in,
        n: n as u64,
        checkpoints,
        average,
        exact,
        error: exact.map(|e| average - e),
        sigma2_bm,
        tolerance: sigma2_bm.map(|s| 5.0 * s.sqrt() / (n as f64).sqrt()),
    })
}

/// Batch-means estimate of the asymptotic variance of `f` over the retained
/// part of the trace.
pub fn batch_means_variance(trace: &RunTrace, f: TestFunction, batches: usize) -> Result<f64> {
    let values: Vec<f64> = trace.retained().map(|x| f.eval(x)).collect();
    batch_means_of(&values, batches)
}

/// `L · Var(batch means)` with batch length `L = ⌊n/B⌋`; the leading
/// `n mod B` values are dropped.
pub fn batch_means_of(values: &[f64], batches: usize) -> Result<f64> {
    if batches < 2 || values.len() < 2 * batches {
        return Err(Error::InsufficientLength { needed: 2 * batches.max(2), found: values.len() });
    }
    let len = values.len() / batches;
    let start = values.len() - len * batches;
    let means: Vec<f64> =
        values[start..].chunks(len).map(|c| c.iter().sum::<f64>() / len as f64).collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (batches - 1) as f64;
    Ok(len as f64 * var)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMethod {
    Replication,
    BatchMeans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub function: String,
    pub replicates: usize,
    pub n: u64,
    pub sigma_method: SigmaMethod,
    /// Replication standard deviation of `√n (S_n − π(f))` (for batch means,
    /// the average of the per-replicate estimates).
    pub sigma_hat: f64,
    pub z: Vec<f64>,
    pub mean_z: f64,
    pub ks_statistic: f64,
    pub p_value: f64,
}

pub const MIN_CLT_REPLICATES: usize = 100;

/// Per-replicate summary of `f` along one chain: retained length, ergodic
/// average and (for batch-means standardization) the batch-means variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateAverage {
    pub n: u64,
    pub average: f64,
    pub sigma2_bm: Option<f64>,
}

impl ReplicateAverage {
    pub fn of(trace: &RunTrace, f: TestFunction, with_batch_means: bool) -> Self {
        let values: Vec<f64> = trace.retained().map(|x| f.eval(x)).collect();
        let n = values.len() as u64;
        Self {
            n,
            average: values.iter().sum::<f64>() / n.max(1) as f64,
            sigma2_bm: if with_batch_means { batch_means_of(&values, DEFAULT_BATCHES).ok() } else { None },
        }
    }
}

/// Runs `replicates` chains (`run(r)` must be deterministic in `r`),
/// standardizes `√n (S_n^{(r)} − π(f))` and tests the result against 𝒩(0, 1).
pub fn clt_test<F>(f: TestFunction, exact: f64, replicates: usize, method: SigmaMethod, run: F) -> Result<CltReport>
where
    F: Fn(u64) -> RunTrace + Sync,
{
    if replicates < MIN_CLT_REPLICATES {
        return Err(Error::TooFewReplicates { needed: MIN_CLT_REPLICATES, found: replicates });
    }
    let per_rep: Vec<ReplicateAverage> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| ReplicateAverage::of(&run(r), f, method == SigmaMethod::BatchMeans))
        .collect();
    clt_from_replicates(f, exact, method, &per_rep)
}

/// The CLT test on already computed replicate averages (in replicate order).
pub fn clt_from_replicates(
    f: TestFunction,
    exact: f64,
    method: SigmaMethod,
    per_rep: &[ReplicateAverage],
) -> Result<CltReport> {
    if per_rep.len() < MIN_CLT_REPLICATES {
        return Err(Error::TooFewReplicates { needed: MIN_CLT_REPLICATES, found: per_rep.len() });
    }
    let n = per_rep[0].n;
    if n == 0 || per_rep.iter().any(|p| p.n != n) {
        return Err(Error::InvalidParameter("replicates must retain the same positive number of samples".into()));
    }
    let root_n = (n as f64).sqrt();
    let y: Vec<f64> = per_rep.iter().map(|p| root_n * (p.average - exact)).collect();
    let (z, sigma_hat) = match method {
        SigmaMethod::Replication => {
            let m = y.iter().sum::<f64>() / y.len() as f64;
            let var = y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (y.len() - 1) as f64;
            let s = var.sqrt();
            (y.iter().map(|v| v / s).collect::<Vec<_>>(), s)
        }
        SigmaMethod::BatchMeans => {
            let mut sigmas = Vec::with_capacity(y.len());
            for p in per_rep {
                let s2 = p.sigma2_bm.ok_or(Error::InsufficientLength { needed: 2 * DEFAULT_BATCHES, found: n as usize })?;
                sigmas.push(s2.sqrt());
            }
            let z = y.iter().zip(&sigmas).map(|(v, s)| v / s).collect();
            (z, sigmas.iter().sum::<f64>() / sigmas.len() as f64)
        }
    };
    let (ks_statistic, p_value) = ks_one_sample(&z, normal_cdf);
    Ok(CltReport {
        function: f.id(),
        replicates: per_rep.len(),
        n,
        sigma_method: method,
        sigma_hat,
        mean_z: z.iter().sum::<f64>() / z.len() as f64,
        z,
        ks_statistic,
        p_value,
    })
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `Q_KS(λ) = 2 Σ_{j≥1} (−1)^{j−1} e^{−2j²λ²}`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=200 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Kolmogorov–Smirnov statistic of `data` against `cdf`, with the asymptotic
/// p-value using the effective size correction `(√n + 0.12 + 0.11/√n) D`.
pub fn ks_one_sample(data: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let c = cdf(*x);
            (c - i as f64 / n).max((i + 1) as f64 / n - c)
        })
        .fold(0.0, f64::max);
    let en = n.sqrt();
    (d, kolmogorov_survival((en + 0.12 + 0.11 / en) * d))
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let en = ((na * nb) as f64 / (na + nb) as f64).sqrt();
    (d, kolmogorov_survival((en + 0.12 + 0.11 / en) * d))
}

/// Monte Carlo estimate of `P V(x) / V(x)` at one probe point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftEstimate {
    pub x: Vec<f64>,
    pub ratio: f64,
    pub std_error: f64,
}

/// `V = (π / sup π)^{−η}`, evaluated in log space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerDrift<'t> {
    target: &'t TargetModel,
    eta: f64,
    log_sup: f64,
}

impl<'t> PowerDrift<'t> {
    pub fn new(target: &'t TargetModel, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::InvalidParameter(format!("eta must lie in (0, 1), got {eta}")));
        }
        Ok(Self { target, eta, log_sup: target.log_sup_density().0 })
    }

    pub fn log_v(&self, x: &[f64]) -> f64 {
        -self.eta * (self.target.log_density(x) - self.log_sup)
    }

    pub fn v(&self, x: &[f64]) -> f64 {
        self.log_v(x).exp()
    }
}

/// Averages `V(X')/V(x)` over `draws` kernel steps from each point; point `i`
/// uses stream `i` of `seed`.
pub fn drift_probe<K: MhKernel + Sync>(
    kernel: &K,
    log_v: impl Fn(&[f64]) -> f64 + Sync,
    points: &[Vec<f64>],
    draws: usize,
    seed: u64,
) -> Vec<DriftEstimate> {
    points
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut rng = replicate_rng(seed, i as u64);
            let lv0 = log_v(x);
            let ratios: Vec<f64> = (0..draws)
                .map(|_| {
                    let out = kernel.step(x, &mut rng);
                    if out.accepted {
                        (log_v(&out.new_x) - lv0).exp()
                    } else {
                        1.0
                    }
                })
                .collect();
            let (ratio, std_error) = mean_and_se(&ratios);
            DriftEstimate { x: x.clone(), ratio, std_error }
        })
        .collect()
}

/// `sup_{u∈[0,1]} (1 − u + u^{1−η})`: the largest possible SRWM drift ratio
/// for `V = (π/sup π)^{−η}` (attained at `u = (1−η)^{1/η}`).
pub fn srwm_drift_ceiling(eta: f64) -> f64 {
    let u = (1.0 - eta).powf(1.0 / eta);
    1.0 - u + u.powf(1.0 - eta)
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinorizationReport {
    /// `min q(x)/π(x)` over the probed points.
    pub eps_hat: f64,
    pub argmin: Vec<f64>,
    pub points: usize,
    /// Analytic lower bound (`ι · inf ζ/π`) when supplied.
    pub analytic: Option<f64>,
}

/// Minimum of `q/π` over `samples` exact draws of `π` plus a coarse grid
/// covering `mean ± 6 sd` of `π` (grid only for dimension ≤ 2).
pub fn minorization_probe<R: Rng + ?Sized>(
    log_q: impl Fn(&[f64]) -> f64,
    target: &TargetModel,
    samples: usize,
    analytic: Option<f64>,
    rng: &mut R,
) -> MinorizationReport {
    let mut points: Vec<Vec<f64>> = (0..samples).map(|_| target.exact_sample(rng)).collect();
    points.extend(coarse_grid(target));
    let mut best = (f64::INFINITY, Vec::new());
    for x in &points {
        let r = log_q(x) - target.log_density(x);
        if r < best.0 {
            best = (r, x.clone());
        }
    }
    MinorizationReport { eps_hat: best.0.exp(), argmin: best.1, points: points.len(), analytic }
}

fn coarse_grid(target: &TargetModel) -> Vec<Vec<f64>> {
    let (mu, cov) = target.exact_moments();
    let d = target.dim();
    let axis = |i: usize, n: usize| -> Vec<f64> {
        let s = cov.get(i, i).sqrt();
        (0..n).map(|k| mu[i] - 6.0 * s + 12.0 * s * k as f64 / (n - 1) as f64).collect()
    };
    match d {
        1 => axis(0, 201).into_iter().map(|v| vec![v]).collect(),
        2 => {
            let (a, b) = (axis(0, 41), axis(1, 41));
            a.iter().flat_map(|u| b.iter().map(move |v| vec![*u, *v])).collect()
        }
        _ => Vec::new(),
    }
}

/// `inf_x exp(log_q(x) − log π(x))` by multistart gradient descent on the log
/// ratio from each start point. Meaningful when `q` has heavier tails than `π`
/// so that the infimum is attained.
pub fn infimum_density_ratio(
    log_q: impl Fn(&[f64]) -> f64,
    grad_log_q: impl Fn(&[f64]) -> Vec<f64>,
    target: &TargetModel,
    starts: &[Vec<f64>],
) -> (f64, Vec<f64>) {
    let obj = |x: &[f64]| log_q(x) - target.log_density(x);
    let grad = |x: &[f64]| -> Vec<f64> {
        let gq = grad_log_q(x);
        let gp = target.grad_log_density(x);
        gq.iter().zip(&gp).map(|(a, b)| a - b).collect()
    };
    let mut best = (f64::INFINITY, Vec::new());
    for s in starts {
        let mut x = s.clone();
        let mut fx = obj(&x);
        let mut step = 1.0;
        for _ in 0..5000 {
            let g = grad(&x);
            let gn = linalg::norm(&g);
            if gn < 1e-12 {
                break;
            }
            let mut moved = false;
            while step > 1e-14 {
                let y: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
                let fy = obj(&y);
                if fy < fx {
                    x = y;
                    fx = fy;
                    step *= 2.0;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if fx < best.0 {
            best = (fx, x);
        }
    }
    (best.0.exp(), best.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEntry {
    pub x: Vec<f64>,
    pub difference: f64,
    pub std_error: f64,
    pub ratio: f64,
    pub ratio_std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub entries: Vec<LipschitzEntry>,
    /// `2 n_x / λ_min(𝒦) · sup|f|`.
    pub bound: f64,
    pub max_ratio: f64,
    /// Every entry satisfies `ratio ≤ bound + 3 SE`.
    pub within_bound: bool,
}

/// Estimates `|P_Γ f(x) − P_Γ' f(x)| / ‖Γ − Γ'‖_F` for SRWM kernels with
/// increments `𝒩(0, Γ)` and `𝒩(0, Γ')`, driving both with the same normals and
/// uniforms. `lambda_min` is the smallest eigenvalue allowed in the compact set.
pub fn kernel_lipschitz_probe(
    target: &TargetModel,
    gamma: &SymMatrix,
    gamma_prime: &SymMatrix,
    lambda_min: f64,
    f: TestFunction,
    points: &[Vec<f64>],
    draws: usize,
    seed: u64,
) -> Result<LipschitzReport> {
    let k1 = SrwmKernel::new(target, gamma)?;
    let k2 = SrwmKernel::new(target, gamma_prime)?;
    let dist = gamma.sub(gamma_prime).frobenius_norm();
    let d = target.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = points
        .iter()
        .map(|x| {
            let diffs: Vec<f64> = (0..draws)
                .map(|_| {
                    let z = linalg::standard_normal_vec(&mut rng, d);
                    let u: f64 = rng.random();
                    f.eval(&k1.step_with(x, &z, u).new_x) - f.eval(&k2.step_with(x, &z, u).new_x)
                })
                .collect();
            let (difference, std_error) = mean_and_se(&diffs);
            let (ratio, ratio_std_error) = if dist > 0.0 {
                (difference.abs() / dist, std_error / dist)
            } else {
                (0.0, 0.0)
            };
            LipschitzEntry { x: x.clone(), difference, std_error, ratio, ratio_std_error }
        })
        .collect::<Vec<_>>();
    let bound = 2.0 * d as f64 / lambda_min * f.sup_abs();
    let max_ratio = entries.iter().map(|e| e.ratio).fold(0.0, f64::max);
    let within_bound = entries.iter().all(|e| e.ratio <= bound + 3.0 * e.ratio_std_error);
    Ok(LipschitzReport { entries, bound, max_ratio, within_bound })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStateReport {
    pub theta1: f64,
    pub theta2: f64,
    /// Invariant law of the state-dependent chain, solved numerically.
    pub adaptive_invariant: [f64; 2],
    /// `(θ2, θ1) / (θ1 + θ2)`.
    pub closed_form: [f64; 2],
    /// Invariant law of `P_θ1` and `P_θ2`.
    pub fixed_invariants: [[f64; 2]; 2],
}

/// `P_θ = [[1−θ, θ], [θ, 1−θ]]`.
pub fn two_state_kernel(theta: f64) -> [[f64; 2]; 2] {
    [[1.0 - theta, theta], [theta, 1.0 - theta]]
}

/// Solves `πP = π`, `π₁ + π₂ = 1` by Gaussian elimination on
/// `[(Pᵀ − I) row 1; 1 1]`.
pub fn stationary_2x2(p: &[[f64; 2]; 2]) -> [f64; 2] {
    // Row 1 of (Pᵀ − I): (p11 − 1) π1 + p21 π2 = 0, with p11 − 1 written as
    // −p12 to avoid cancellation. Row 2 is replaced by the normalization.
    let (a11, a12, b1) = (-p[0][1], p[1][0], 0.0);
    let (a21, a22, b2) = (1.0, 1.0, 1.0);
    let det = a11 * a22 - a12 * a21;
    [(b1 * a22 - a12 * b2) / det, (a11 * b2 - a21 * b1) / det]
}

/// The counterexample where each state uses its own `θ`: every `P_θ` leaves
/// `(1/2, 1/2)` invariant, yet the state-dependent chain does not.
pub fn two_state_oracle(theta1: f64, theta2: f64) -> Result<TwoStateReport> {
    for (name, t) in [("theta1", theta1), ("theta2", theta2)] {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {t}")));
        }
    }
    let adaptive = [[1.0 - theta1, theta1], [theta2, 1.0 - theta2]];
    Ok(TwoStateReport {
        theta1,
        theta2,
        adaptive_invariant: stationary_2x2(&adaptive),
        closed_form: [theta2 / (theta1 + theta2), theta1 / (theta1 + theta2)],
        fixed_invariants: [stationary_2x2(&two_state_kernel(theta1)), stationary_2x2(&two_state_kernel(theta2))],
    })
}

/// Long-run occupancy of the state-dependent chain started in state 0.
pub fn simulate_two_state<R: Rng + ?Sized>(theta1: f64, theta2: f64, steps: u64, rng: &mut R) -> [f64; 2] {
    let mut state = 0usize;
    let mut counts = [0u64; 2];
    for _ in 0..steps {
        let flip = if state == 0 { theta1 } else { theta2 };
        if rng.random::<f64>() < flip {
            state = 1 - state;
        }
        counts[state] += 1;
    }
    [counts[0] as f64 / steps as f64, counts[1] as f64 / steps as f64]
}
