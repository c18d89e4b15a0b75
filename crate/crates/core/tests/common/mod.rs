//! Checks shared by the invariant tests and the acceptance suite. Each returns
//! an [`Outcome`] so the acceptance runner can print one line per criterion.
#![allow(dead_code)]

use adaptmc::diagnostics::{
    drift_probe, kernel_lipschitz_probe, minorization_probe, srwm_drift_ceiling, PowerDrift, TestFunction,
};
use adaptmc::experiment::safeguard_minorization;
use adaptmc::kernels::{srwm_log_accept, imh_log_accept, MixtureProposal, Safeguard, SrwmKernel};
use adaptmc::linalg::{self, FactoredGaussian, SymMatrix};
use adaptmc::mixture_em::{self, MixtureSuffStats, MixtureXi, MstepFloors};
use adaptmc::nsrwm::{self, NsrwmParam};
use adaptmc::schemes::{em_imh_chain, EmImhScheme, EmImhSetup};
use adaptmc::controller::{AdaptiveChain, StepsizeSchedule};
use adaptmc::target::TargetModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub passed: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }

    pub fn all(parts: Vec<(&str, Outcome)>) -> Self {
        let passed = parts.iter().all(|(_, o)| o.passed);
        let detail = parts
            .iter()
            .map(|(name, o)| format!("{name}{}: {}", if o.passed { "" } else { " FAILED" }, o.detail))
            .collect::<Vec<_>>()
            .join("; ");
        Self { passed, detail }
    }

    pub fn assert(&self) {
        assert!(self.passed, "{}", self.detail);
    }
}

pub fn target_2d() -> TargetModel {
    TargetModel::gaussian(vec![1.0, -1.0], SymMatrix::from_rows(&[vec![2.0, 0.8], vec![0.8, 1.0]]).unwrap()).unwrap()
}

pub fn std_1d() -> TargetModel {
    TargetModel::gaussian(vec![0.0], SymMatrix::identity(1)).unwrap()
}

/// Equal mixture of `𝒩(−2, 0.8)` and `𝒩(2, 1.2)`.
pub fn mixture_1d() -> TargetModel {
    TargetModel::mixture(
        vec![0.5, 0.5],
        vec![vec![-2.0], vec![2.0]],
        vec![SymMatrix::diagonal(&[0.8]), SymMatrix::diagonal(&[1.2])],
    )
    .unwrap()
}

pub fn em_imh_mixture_chain() -> AdaptiveChain<EmImhScheme> {
    let setup = EmImhSetup::new(vec![vec![-1.0], vec![1.0]], SymMatrix::identity(1));
    em_imh_chain(mixture_1d(), &setup, StepsizeSchedule::default(), vec![0.0]).unwrap()
}

pub fn random_spd<R: Rng>(rng: &mut R, n: usize, floor: f64) -> SymMatrix {
    let b: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            g[i * n + j] = (0..n).map(|k| b[i * n + k] * b[j * n + k]).sum::<f64>();
        }
        g[i * n + i] += floor;
    }
    SymMatrix::symmetrized(n, g)
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize, half_width: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-half_width..half_width)).collect()
}

pub fn random_xi<R: Rng>(rng: &mut R, m: usize, d: usize) -> MixtureXi {
    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    let means = (0..m).map(|_| random_vec(rng, d, 4.0)).collect();
    let covs = (0..m).map(|_| random_spd(rng, d, 0.2)).collect();
    MixtureXi::new(weights, means, covs).unwrap()
}

fn mixture_proposal_for(xi: MixtureXi) -> MixtureProposal {
    let d = xi.dim();
    let zeta = Safeguard::gaussian(vec![0.0; d], &SymMatrix::scaled_identity(d, 25.0)).unwrap();
    MixtureProposal::new(xi, zeta, 0.1).unwrap()
}

/// Full MH detailed-balance identity in log space for SRWM and IMH on random
/// pairs, for the 2D Gaussian and the 1D mixture.
pub fn detailed_balance(pairs: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_srwm = 0.0f64;
    let mut worst_imh = 0.0f64;
    for t in [target_2d(), mixture_1d()] {
        let d = t.dim();
        let inc = FactoredGaussian::new(vec![0.0; d], &random_spd(&mut rng, d, 0.1)).unwrap();
        let proposal = mixture_proposal_for(random_xi(&mut rng, 2, d));
        for _ in 0..pairs {
            let x = random_vec(&mut rng, d, 8.0);
            let y = random_vec(&mut rng, d, 8.0);
            let lhs = t.log_density(&x) + inc.log_pdf(&linalg::sub(&y, &x)) + srwm_log_accept(&t, &x, &y);
            let rhs = t.log_density(&y) + inc.log_pdf(&linalg::sub(&x, &y)) + srwm_log_accept(&t, &y, &x);
            worst_srwm = worst_srwm.max((lhs - rhs).abs());
            let lhs = t.log_density(&x) + proposal.log_pdf(&y) + imh_log_accept(&t, &proposal, &x, &y);
            let rhs = t.log_density(&y) + proposal.log_pdf(&x) + imh_log_accept(&t, &proposal, &y, &x);
            worst_imh = worst_imh.max((lhs - rhs).abs());
        }
    }
    Outcome::new(
        worst_srwm <= 1e-10 && worst_imh <= 1e-10,
        format!("max gap srwm {worst_srwm:.2e}, imh {worst_imh:.2e} (tol 1e-10)"),
    )
}

/// `θ + γ H(θ, x)` against the coupled mean/covariance recursion written out
/// entry by entry.
pub fn recursion_identity(cases: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let n = rng.random_range(1..6);
        let theta = NsrwmParam::new(random_vec(&mut rng, n, 3.0), random_spd(&mut rng, n, 0.1)).unwrap();
        let x = random_vec(&mut rng, n, 5.0);
        let step: f64 = rng.random();
        let next = theta.apply(step, &nsrwm::update_field(&theta, &x));
        for i in 0..n {
            let mu_i = theta.mu[i] + step * (x[i] - theta.mu[i]);
            worst = worst.max((next.mu[i] - mu_i).abs() / (1.0 + mu_i.abs()));
            for j in 0..n {
                let g = theta.gamma.get(i, j);
                let g_ij = g + step * ((x[i] - theta.mu[i]) * (x[j] - theta.mu[j]) - g);
                worst = worst.max((next.gamma.get(i, j) - g_ij).abs() / (1.0 + g_ij.abs()));
            }
        }
    }
    Outcome::new(worst <= 1e-14, format!("max relative gap {worst:.2e} over {cases} cases (tol 1e-14)"))
}

/// Monte Carlo mean of `H(θ, X)` with exact draws against the closed-form `h(θ)`.
pub fn mean_field_consistency(draws: usize, seed: u64) -> Outcome {
    let t = target_2d();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = NsrwmParam::new(random_vec(&mut rng, 2, 2.0), random_spd(&mut rng, 2, 0.2)).unwrap();
    let exact = nsrwm::mean_field(&theta, &t).flatten();
    let k = exact.len();
    let mut sum = vec![0.0; k];
    let mut sum_sq = vec![0.0; k];
    for _ in 0..draws {
        let x = t.exact_sample(&mut rng);
        for (i, v) in nsrwm::update_field(&theta, &x).flatten().into_iter().enumerate() {
            sum[i] += v;
            sum_sq[i] += v * v;
        }
    }
    let n = draws as f64;
    let mut worst_z = 0.0f64;
    for i in 0..k {
        let mean = sum[i] / n;
        let var = (sum_sq[i] - n * mean * mean) / (n - 1.0);
        let se = (var / n).sqrt();
        worst_z = worst_z.max((mean - exact[i]).abs() / se);
    }
    Outcome::new(worst_z <= 3.0, format!("max |z| {worst_z:.2} over {k} components, N = {draws} (tol 3 SE)"))
}

fn random_nsrwm_case<R: Rng>(rng: &mut R) -> (TargetModel, NsrwmParam) {
    let n = rng.random_range(1..5);
    let t = TargetModel::gaussian(random_vec(rng, n, 3.0), random_spd(rng, n, 0.3)).unwrap();
    let theta = NsrwmParam::new(random_vec(rng, n, 3.0), random_spd(rng, n, 0.2)).unwrap();
    (t, theta)
}

/// Both forms of `⟨∇w, h⟩` are nonpositive at random `θ`.
pub fn lyapunov_decay_sign(cases: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..cases {
        let (t, theta) = random_nsrwm_case(&mut rng);
        let a = nsrwm::lyapunov_decay(&theta, &t).unwrap();
        let b = nsrwm::lyapunov_decay_exact(&theta, &t).unwrap();
        worst = worst.max(a).max(b);
    }
    Outcome::new(worst <= 0.0, format!("max decay {worst:.3e} over {cases} random θ"))
}

/// Central differences of `w` along `h` against the exact decay.
pub fn lyapunov_finite_difference(cases: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let (t, theta) = random_nsrwm_case(&mut rng);
        let h = nsrwm::mean_field(&theta, &t);
        let dt = 1e-6;
        let plus = nsrwm::lyapunov(&theta.apply(dt, &h), &t).unwrap();
        let minus = nsrwm::lyapunov(&theta.apply(-dt, &h), &t).unwrap();
        let numeric = (plus - minus) / (2.0 * dt);
        let exact = nsrwm::lyapunov_decay_exact(&theta, &t).unwrap();
        worst = worst.max((numeric - exact).abs() / exact.abs().max(1e-8));
    }
    Outcome::new(worst <= 1e-4, format!("max relative gap {worst:.2e} over {cases} random θ (tol 1e-4)"))
}

/// `mstep(T̄(ξ)) = ξ` when no floor is active.
pub fn mstep_fixed_point(cases: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let m = rng.random_range(1..5);
        let d = rng.random_range(1..4);
        let xi = random_xi(&mut rng, m, d);
        let back = mixture_em::mstep(&MixtureSuffStats::from_xi(&xi), &MstepFloors::defaults(m, 1.0)).unwrap();
        for j in 0..m {
            worst = worst.max((back.weights()[j] - xi.weights()[j]).abs());
            worst = worst.max(linalg::norm(&linalg::sub(back.mean(j), xi.mean(j))) / (1.0 + linalg::norm(xi.mean(j))));
            worst = worst.max(back.cov(j).sub(xi.cov(j)).max_abs() / (1.0 + xi.cov(j).max_abs()));
        }
    }
    Outcome::new(worst <= 1e-10, format!("max relative gap {worst:.2e} over {cases} mixtures (tol 1e-10)"))
}

/// Responsibilities are probabilities summing to one, including far tails.
pub fn responsibilities_normalized(cases: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut bad_entry = false;
    for _ in 0..cases {
        let m = rng.random_range(1..6);
        let d = rng.random_range(1..4);
        let xi = random_xi(&mut rng, m, d);
        let scale = [1.0, 10.0, 1e3][rng.random_range(0..3)];
        let x = random_vec(&mut rng, d, scale);
        let r = mixture_em::responsibilities(&xi, &x);
        bad_entry |= r.iter().any(|v| !(0.0..=1.0).contains(v));
        worst = worst.max((r.iter().sum::<f64>() - 1.0).abs());
    }
    Outcome::new(
        worst <= 1e-12 && !bad_entry,
        format!("max |Σr − 1| {worst:.2e} over {cases} cases, entries in [0,1]: {}", !bad_entry),
    )
}

pub fn exactness_suite() -> Outcome {
    Outcome::all(vec![
        ("detailed balance", detailed_balance(2000, 1)),
        ("recursion", recursion_identity(2000, 2)),
        ("mean field", mean_field_consistency(100_000, 3)),
        ("decay sign", lyapunov_decay_sign(1000, 4)),
        ("finite difference", lyapunov_finite_difference(100, 5)),
        ("mstep fixed point", mstep_fixed_point(1000, 6)),
        ("responsibilities", responsibilities_normalized(2000, 7)),
    ])
}

/// SRWM drift ratios on the standard 1D Gaussian with `V = (π/sup π)^{−1/2}`.
pub fn srwm_drift(draws: usize, seed: u64) -> Outcome {
    let t = std_1d();
    let kernel = SrwmKernel::new(&t, &SymMatrix::diagonal(&[2.38 * 2.38])).unwrap();
    let v = PowerDrift::new(&t, 0.5).unwrap();
    let tails: Vec<Vec<f64>> = [5.0, 8.0, 12.0].iter().flat_map(|r| [vec![*r], vec![-*r]]).collect();
    let tail = drift_probe(&kernel, |x| v.log_v(x), &tails, draws, seed);
    let tail_max = tail.iter().map(|e| e.ratio).fold(f64::NEG_INFINITY, f64::max);
    let grid: Vec<Vec<f64>> = (0..=60).map(|i| vec![-15.0 + 0.5 * i as f64]).collect();
    let global = drift_probe(&kernel, |x| v.log_v(x), &grid, draws, seed + 1);
    let ceiling = srwm_drift_ceiling(0.5);
    let global_ok = global.iter().all(|e| e.ratio <= ceiling + 0.05 && e.ratio <= ceiling + 3.0 * e.std_error);
    let global_max = global.iter().map(|e| e.ratio).fold(f64::NEG_INFINITY, f64::max);
    Outcome::new(
        tail_max < 0.95 && global_ok,
        format!("max tail ratio {tail_max:.4} (< 0.95), max global ratio {global_max:.4} (≤ {ceiling} + 0.05)"),
    )
}

/// Sampled `min q/π` for the EM-IMH proposal against `ι · inf ζ/π`.
pub fn imh_minorization(samples: usize, seed: u64) -> Outcome {
    let chain = em_imh_mixture_chain();
    let scheme = chain.scheme();
    let analytic = safeguard_minorization(scheme);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let mut thetas = vec![chain.reset().theta0().clone()];
    let trace = chain.run(20_000, seed, &Default::default());
    thetas.push(MixtureSuffStats::unflatten(2, 1, &trace.final_theta).unwrap());
    for theta in &thetas {
        let q = scheme.proposal(theta).unwrap();
        let report = minorization_probe(|x| q.log_pdf(x), scheme.target(), samples, Some(analytic), &mut rng);
        worst = worst.min(report.eps_hat);
    }
    Outcome::new(
        worst >= 0.5 * analytic,
        format!("eps_hat {worst:.4} vs ι·e {analytic:.4} (need ≥ 0.5·ι·e = {:.4})", 0.5 * analytic),
    )
}

/// Lipschitz spot check in `Γ` for SRWM kernels on the standard 1D Gaussian.
pub fn srwm_lipschitz(draws: usize, seed: u64) -> Outcome {
    let t = std_1d();
    let points: Vec<Vec<f64>> = [-3.0, -1.0, 0.0, 0.5, 2.0, 4.0].iter().map(|x| vec![*x]).collect();
    let report = kernel_lipschitz_probe(
        &t,
        &SymMatrix::diagonal(&[1.0]),
        &SymMatrix::diagonal(&[1.1]),
        0.5,
        TestFunction::Tanh(0),
        &points,
        draws,
        seed,
    )
    .unwrap();
    Outcome::new(
        report.within_bound,
        format!("max ratio {:.4} vs bound {:.1} + 3 SE", report.max_ratio, report.bound),
    )
}
