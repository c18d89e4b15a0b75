use std::sync::atomic::{AtomicU64, Ordering};

use adaptmc::controller::{
    AdaptiveChain, AdaptiveScheme, NsrwmCoverage, StepsizeSchedule, TraceOptions,
};
use adaptmc::kernels::SrwmKernel;
use adaptmc::linalg::SymMatrix;
use adaptmc::mixture_em::MixtureSuffStats;
use adaptmc::nsrwm::{self, default_lambda, NsrwmParam};
use adaptmc::schemes::{em_imh_chain, nsrwm_chain, EmImhSetup, NsrwmScheme};
use adaptmc::target::TargetModel;
use adaptmc::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn target_2d() -> TargetModel {
    TargetModel::gaussian(vec![1.0, -1.0], SymMatrix::from_rows(&[vec![2.0, 0.8], vec![0.8, 1.0]]).unwrap()).unwrap()
}

fn chain_2d() -> AdaptiveChain<NsrwmScheme> {
    nsrwm_chain(target_2d(), default_lambda(2), StepsizeSchedule::default(), vec![0.0; 2], vec![0.0; 2], SymMatrix::identity(2))
        .unwrap()
}

/// N-SRWM where the updates listed in `kicks` (1-based call count) throw `μ`
/// far outside every truncation set reached so far.
struct Kicked {
    inner: NsrwmScheme,
    kicks: Vec<u64>,
    calls: AtomicU64,
}

impl AdaptiveScheme for Kicked {
    type Param = NsrwmParam;
    type Kernel<'a> = SrwmKernel<'a>;

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn kernel(&self, theta: &NsrwmParam) -> Result<SrwmKernel<'_>> {
        self.inner.kernel(theta)
    }

    fn update(&self, theta: &NsrwmParam, kernel: &SrwmKernel<'_>, x: &[f64], step: f64) -> Result<NsrwmParam> {
        let call = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        let mut next = self.inner.update(theta, kernel, x, step)?;
        if self.kicks.contains(&call) {
            next.mu[0] += 1e6;
        }
        Ok(next)
    }

    fn in_coverage(&self, q: u32, theta: &NsrwmParam) -> bool {
        self.inner.in_coverage(q, theta)
    }

    fn flatten(&self, theta: &NsrwmParam) -> Vec<f64> {
        theta.flatten()
    }
}

fn kicked_chain(kicks: Vec<u64>) -> AdaptiveChain<Kicked> {
    let t = target_2d();
    let coverage = NsrwmCoverage::around(&[0.0, 0.0], &SymMatrix::identity(2));
    let inner = NsrwmScheme::new(t, default_lambda(2), coverage).unwrap();
    let theta0 = NsrwmParam::new(vec![0.0; 2], SymMatrix::identity(2)).unwrap();
    AdaptiveChain::new(Kicked { inner, kicks, calls: AtomicU64::new(0) }, StepsizeSchedule::default(), vec![0.0; 2], theta0)
        .unwrap()
}

#[test]
fn same_seed_same_trace() {
    let c = chain_2d();
    let opts = TraceOptions { theta_cadence: 7, burn_in: 0 };
    assert_eq!(c.run(2000, 11, &opts), c.run(2000, 11, &opts));
    assert_ne!(c.run(2000, 11, &opts).samples(), c.run(2000, 12, &opts).samples());
}

#[test]
fn golden_ten_steps() {
    let trace = chain_2d().run(10, 2024, &TraceOptions::default());
    let got: Vec<(f64, bool)> = trace.records().map(|r| (r.x[0], r.accepted)).collect();
    assert_eq!(got, GOLDEN_TEN_STEPS.to_vec());
}

const GOLDEN_TEN_STEPS: [(f64, bool); 10] = [
    (0.0, false),
    (1.7997107456028516, true),
    (-1.1920963803289064, true),
    (-1.1920963803289064, false),
    (0.993447588595687, true),
    (0.993447588595687, false),
    (0.993447588595687, false),
    (0.993447588595687, false),
    (0.993447588595687, false),
    (0.993447588595687, false),
];

#[test]
fn first_step_restarts_and_uses_first_stepsize() {
    let c = chain_2d();
    let z0 = c.initial_state();
    assert_eq!((z0.kappa, z0.nu), (0, 0));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (z1, rec) = c.transition(&z0, &mut rng);
    assert!(rec.restarted && !rec.exited);
    assert_eq!(rec.step, 0.5);
    assert_eq!((z1.kappa, z1.nu), (0, 1));
    let (_, rec2) = c.transition(&z1, &mut rng);
    assert_eq!(rec2.step, 0.5 / 2f64.powf(0.7));
    assert!(!rec2.restarted);
}

#[test]
fn parameter_path_is_recomputable_from_samples() {
    // With snapshots at every step, θ_k = θ_{k−1} + γ H(θ_{k−1}, X_k) exactly,
    // restarting from θ₀ after each exit.
    let c = kicked_chain(vec![40, 90, 91]);
    let trace = c.run(300, 5, &TraceOptions { theta_cadence: 1, burn_in: 0 });
    assert!(trace.total_reinits() >= 3);
    let theta0 = c.reset().theta0().clone();
    let mut theta = theta0.clone();
    let (mut kappa, mut nu) = (0u32, 0u64);
    for (rec, snap) in trace.records().zip(trace.snapshots()) {
        if nu == 0 {
            theta = theta0.clone();
        }
        let step = c.schedule().shifted(u64::from(kappa)).gamma_at(nu + 1);
        let mut next = theta.apply(step, &nsrwm::update_field(&theta, rec.x));
        if [40, 90, 91].contains(&rec.k) {
            next.mu[0] += 1e6;
        }
        let recorded = NsrwmParam::unflatten(2, snap.theta.as_ref().unwrap()).unwrap();
        assert_eq!(recorded, next, "step {}", rec.k);
        theta = next;
        kappa = rec.kappa;
        nu = rec.nu;
    }
}

#[test]
fn forced_exit_moves_to_next_set_and_restarts() {
    let c = kicked_chain(vec![25]);
    let trace = c.run(60, 3, &TraceOptions::default());
    assert_eq!(trace.reinit_steps(), &[25]);
    let r25 = trace.records().nth(24).unwrap();
    assert_eq!((r25.kappa, r25.nu, r25.reinit), (1, 0, true));
    let r26 = trace.records().nth(25).unwrap();
    assert_eq!((r26.kappa, r26.nu), (1, 1));
    assert!(trace.kappa()[..24].iter().all(|k| *k == 0));
    assert!(trace.kappa()[24..].iter().all(|k| *k == 1));
    assert_eq!(trace.final_kappa, 1);
}

#[test]
fn consecutive_exits_each_count() {
    let c = kicked_chain(vec![10, 11, 12]);
    let trace = c.run(30, 4, &TraceOptions::default());
    assert_eq!(trace.reinit_steps(), &[10, 11, 12]);
    assert_eq!(trace.final_kappa, 3);
}

#[test]
fn coverage_sets_are_nested() {
    let cov = NsrwmCoverage::around(&[0.0, 0.0], &SymMatrix::identity(2));
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    use rand::Rng;
    for _ in 0..2000 {
        let mu = vec![rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)];
        let a: f64 = rng.random_range(-3.0..3.0);
        let b: f64 = rng.random_range(-3.0..3.0);
        let o: f64 = rng.random_range(-1.0..1.0);
        let g = SymMatrix::from_rows(&[vec![10f64.powf(a), o], vec![o, 10f64.powf(b)]]).unwrap();
        let theta = NsrwmParam::new(mu, g).unwrap();
        for q in 0..8 {
            if adaptmc::controller::CompactCoverage::contains(&cov, q, &theta) {
                assert!(adaptmc::controller::CompactCoverage::contains(&cov, q + 1, &theta));
            }
        }
    }
}

#[test]
fn initial_parameter_must_lie_in_first_set() {
    let t = target_2d();
    let r = nsrwm_chain(t, 1.0, StepsizeSchedule::default(), vec![0.0; 2], vec![0.0; 2], SymMatrix::zeros(2));
    assert!(r.is_err());
    let r = nsrwm_chain(target_2d(), 1.0, StepsizeSchedule::default(), vec![0.0; 3], vec![0.0; 2], SymMatrix::identity(2));
    assert!(r.is_err());
}

#[test]
fn em_imh_chain_runs_and_stays_in_range() {
    let mix = TargetModel::mixture(
        vec![0.5, 0.5],
        vec![vec![-2.0], vec![2.0]],
        vec![SymMatrix::diagonal(&[0.8]), SymMatrix::diagonal(&[1.2])],
    )
    .unwrap();
    let setup = EmImhSetup::new(vec![vec![-1.0], vec![1.0]], SymMatrix::identity(1));
    let c = em_imh_chain(mix, &setup, StepsizeSchedule::default(), vec![0.0]).unwrap();
    let trace = c.run(5000, 8, &TraceOptions { theta_cadence: 100, burn_in: 0 });
    assert_eq!(trace.snapshots().len(), 50);
    let theta = MixtureSuffStats::unflatten(2, 1, &trace.final_theta).unwrap();
    assert!((theta.s0.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(trace.acceptance_rate() > 0.5);
}

#[test]
fn replicate_streams_differ() {
    let c = chain_2d();
    let a = c.run_replicate(100, 1, 0, &TraceOptions::default());
    let b = c.run_replicate(100, 1, 1, &TraceOptions::default());
    assert_ne!(a.samples(), b.samples());
    assert_eq!(a, c.run_replicate(100, 1, 0, &TraceOptions::default()));
}
