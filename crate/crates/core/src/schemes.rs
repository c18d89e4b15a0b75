//! The two concrete adaptive samplers plugged into [`AdaptiveChain`].

use crate::controller::{AdaptiveChain, AdaptiveScheme, CompactCoverage, MixtureCoverage, NsrwmCoverage};
use crate::controller::StepsizeSchedule;
use crate::error::{Error, Result};
use crate::kernels::{ImhKernel, MixtureProposal, Safeguard, SafeguardKind, SrwmKernel};
use crate::linalg::SymMatrix;
use crate::mixture_em::{self, MixtureSuffStats, MixtureXi, MstepFloors};
use crate::nsrwm::{self, NsrwmParam};
use crate::target::TargetModel;

/// Random-walk Metropolis with proposal covariance `λΓ`, adapting `θ = (μ, Γ)`.
#[derive(Debug, Clone)]
pub struct NsrwmScheme {
    target: TargetModel,
    lambda: f64,
    coverage: NsrwmCoverage,
}

impl NsrwmScheme {
    pub fn new(target: TargetModel, lambda: f64, coverage: NsrwmCoverage) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self { target, lambda, coverage })
    }

    pub fn target(&self) -> &TargetModel {
        &self.target
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn coverage(&self) -> &NsrwmCoverage {
        &self.coverage
    }
}

impl AdaptiveScheme for NsrwmScheme {
    type Param = NsrwmParam;
    type Kernel<'a> = SrwmKernel<'a>;

    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn kernel(&self, theta: &NsrwmParam) -> Result<SrwmKernel<'_>> {
        nsrwm::kernel_of(theta, &self.target, self.lambda)
    }

    fn update(&self, theta: &NsrwmParam, _kernel: &SrwmKernel<'_>, x: &[f64], step: f64) -> Result<NsrwmParam> {
        let next = theta.apply(step, &nsrwm::update_field(theta, x));
        if next.is_finite() {
            Ok(next)
        } else {
            Err(Error::InvalidParameter("non-finite parameter".into()))
        }
    }

    fn in_coverage(&self, q: u32, theta: &NsrwmParam) -> bool {
        self.coverage.contains(q, theta)
    }

    fn flatten(&self, theta: &NsrwmParam) -> Vec<f64> {
        theta.flatten()
    }
}

/// Independent Metropolis–Hastings with a safeguarded mixture proposal whose
/// adaptive part is refit by online EM on sufficient statistics.
#[derive(Debug, Clone)]
pub struct EmImhScheme {
    target: TargetModel,
    safeguard: Safeguard,
    iota: f64,
    floors: MstepFloors,
    coverage: MixtureCoverage,
}

impl EmImhScheme {
    pub fn new(
        target: TargetModel,
        safeguard: Safeguard,
        iota: f64,
        floors: MstepFloors,
        coverage: MixtureCoverage,
    ) -> Result<Self> {
        if !(iota > 0.0 && iota < 1.0) {
            return Err(Error::InvalidParameter(format!("iota must lie in (0, 1), got {iota}")));
        }
        if safeguard.dim() != target.dim() {
            return Err(Error::DimensionMismatch { expected: target.dim(), found: safeguard.dim() });
        }
        Ok(Self { target, safeguard, iota, floors, coverage })
    }

    pub fn target(&self) -> &TargetModel {
        &self.target
    }

    pub fn safeguard(&self) -> &Safeguard {
        &self.safeguard
    }

    pub fn iota(&self) -> f64 {
        self.iota
    }

    pub fn floors(&self) -> &MstepFloors {
        &self.floors
    }

    pub fn coverage(&self) -> &MixtureCoverage {
        &self.coverage
    }

    pub fn proposal(&self, theta: &MixtureSuffStats) -> Result<MixtureProposal> {
        let xi = mixture_em::mstep(theta, &self.floors)?;
        MixtureProposal::new(xi, self.safeguard.clone(), self.iota)
    }
}

impl AdaptiveScheme for EmImhScheme {
    type Param = MixtureSuffStats;
    type Kernel<'a> = ImhKernel<'a>;

    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn kernel(&self, theta: &MixtureSuffStats) -> Result<ImhKernel<'_>> {
        ImhKernel::new(&self.target, self.proposal(theta)?)
    }

    fn update(
        &self,
        theta: &MixtureSuffStats,
        kernel: &ImhKernel<'_>,
        x: &[f64],
        step: f64,
    ) -> Result<MixtureSuffStats> {
        let field = mixture_em::suffstat_expectation(kernel.proposal().xi(), x).sub(theta);
        let next = theta.add_scaled(step, &field);
        if next.is_finite() {
            Ok(next)
        } else {
            Err(Error::InvalidParameter("non-finite parameter".into()))
        }
    }

    fn in_coverage(&self, q: u32, theta: &MixtureSuffStats) -> bool {
        self.coverage.contains(q, theta)
    }

    fn flatten(&self, theta: &MixtureSuffStats) -> Vec<f64> {
        theta.flatten()
    }
}

/// N-SRWM chain with default coverage around `(μ₀, Γ₀)`.
pub fn nsrwm_chain(
    target: TargetModel,
    lambda: f64,
    schedule: StepsizeSchedule,
    x0: Vec<f64>,
    mu0: Vec<f64>,
    gamma0: SymMatrix,
) -> Result<AdaptiveChain<NsrwmScheme>> {
    let coverage = NsrwmCoverage::around(&mu0, &gamma0);
    let theta0 = NsrwmParam::new(mu0, gamma0)?;
    AdaptiveChain::new(NsrwmScheme::new(target, lambda, coverage)?, schedule, x0, theta0)
}

/// Settings for [`em_imh_chain`]. `init_means` has one entry per component.
#[derive(Debug, Clone)]
pub struct EmImhSetup {
    pub init_means: Vec<Vec<f64>>,
    pub init_cov: SymMatrix,
    pub iota: f64,
    pub safeguard: SafeguardKind,
    /// The safeguard covariance is `safeguard_scale · init_cov`.
    pub safeguard_scale: f64,
    /// Safeguard location; the mean of `init_means` when absent.
    pub center: Option<Vec<f64>>,
    pub floors: Option<MstepFloors>,
    /// Defaults to [`MixtureCoverage::around`] the centre and `init_cov`.
    pub coverage: Option<MixtureCoverage>,
}

impl EmImhSetup {
    /// Equal-weight start from `init_means`, `ι = 0.1`, Gaussian safeguard
    /// with covariance `25 · init_cov`.
    pub fn new(init_means: Vec<Vec<f64>>, init_cov: SymMatrix) -> Self {
        Self {
            init_means,
            init_cov,
            iota: 0.1,
            safeguard: SafeguardKind::Gaussian,
            safeguard_scale: 25.0,
            center: None,
            floors: None,
            coverage: None,
        }
    }
}

/// EM-IMH chain started from equal weights, `init_means` and a shared
/// `init_cov`.
pub fn em_imh_chain(
    target: TargetModel,
    setup: &EmImhSetup,
    schedule: StepsizeSchedule,
    x0: Vec<f64>,
) -> Result<AdaptiveChain<EmImhScheme>> {
    let m = setup.init_means.len();
    if m == 0 {
        return Err(Error::InvalidParameter("at least one component is required".into()));
    }
    let d = target.dim();
    let center = setup.center.clone().unwrap_or_else(|| {
        (0..d).map(|i| setup.init_means.iter().map(|mu| mu[i]).sum::<f64>() / m as f64).collect()
    });
    let xi0 = MixtureXi::new(vec![1.0 / m as f64; m], setup.init_means.clone(), vec![setup.init_cov.clone(); m])?;
    let theta0 = MixtureSuffStats::from_xi(&xi0);
    let scale = crate::linalg::eigen_bounds(&setup.init_cov).1;
    let floors = setup.floors.unwrap_or_else(|| MstepFloors::defaults(m, scale));
    let coverage = setup.coverage.unwrap_or_else(|| MixtureCoverage::around(&center, &setup.init_cov, m));
    let safeguard = Safeguard::build(setup.safeguard, center, &setup.init_cov.scale(setup.safeguard_scale))?;
    let scheme = EmImhScheme::new(target, safeguard, setup.iota, floors, coverage)?;
    AdaptiveChain::new(scheme, schedule, x0, theta0)
}
