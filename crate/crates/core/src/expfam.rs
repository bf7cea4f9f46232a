//! One-parameter natural exponential families.
//!
//! A family is described by its sufficient statistic `S`, its log-partition
//! `A` and the base measure `ν`, so that `Q_θ` has density
//! `q_θ(y) = exp(S(y)θ − A(θ))` with respect to `ν`. Four families are
//! built in: Bernoulli, Poisson, exponential and Gaussian with known
//! variance.

use std::f64::consts::{LN_2, SQRT_2};
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{logit, sigmoid, softplus};

/// An interval of the extended real line with open/closed end flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    pub const REAL_LINE: Interval = Interval::open(f64::NEG_INFINITY, f64::INFINITY);
    pub const POSITIVE: Interval = Interval::open(0.0, f64::INFINITY);

    pub const fn open(lo: f64, hi: f64) -> Self {
        Interval {
            lo,
            hi,
            lo_closed: false,
            hi_closed: false,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        if x.is_nan() {
            return false;
        }
        let above = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above && below
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = if self.lo_closed { '[' } else { '(' };
        let r = if self.hi_closed { ']' } else { ')' };
        write!(f, "{l}{}, {}{r}", self.lo, self.hi)
    }
}

/// Reference measure the densities are written against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseMeasure {
    /// Counting measure on {0, 1}.
    CountingBinary,
    /// The Poisson(1) law on ℕ (this is what makes `A(θ) = e^θ − 1`).
    PoissonOne,
    /// Lebesgue measure on (0, ∞).
    LebesguePositive,
    /// The centred Gaussian law 𝒩(0, σ²).
    GaussianReference { sigma: f64 },
}

/// A natural one-parameter exponential family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum NaturalExpFamily {
    Bernoulli,
    Poisson,
    Exponential,
    GaussianFixedSigma { sigma: f64 },
}

impl NaturalExpFamily {
    /// Parses the identifiers used in configuration files. The Gaussian
    /// family takes its σ from a `gaussian_fixed_sigma:<σ>` suffix (default 1).
    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "bernoulli" => Ok(Self::Bernoulli),
            "poisson" => Ok(Self::Poisson),
            "exponential" => Ok(Self::Exponential),
            "gaussian_fixed_sigma" => Ok(Self::GaussianFixedSigma { sigma: 1.0 }),
            other => {
                if let Some(s) = other.strip_prefix("gaussian_fixed_sigma:") {
                    let sigma: f64 = s
                        .parse()
                        .map_err(|_| Error::InvalidConfig(format!("bad sigma in {other:?}")))?;
                    Self::gaussian(sigma)
                } else {
                    Err(Error::InvalidConfig(format!("unknown family {other:?}")))
                }
            }
        }
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        if sigma > 0.0 && sigma.is_finite() {
            Ok(Self::GaussianFixedSigma { sigma })
        } else {
            Err(Error::domain("sigma", sigma, "(0, inf)"))
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Self::Bernoulli => "bernoulli",
            Self::Poisson => "poisson",
            Self::Exponential => "exponential",
            Self::GaussianFixedSigma { .. } => "gaussian_fixed_sigma",
        }
    }

    /// Natural-parameter domain `I`.
    pub fn interval(&self) -> Interval {
        match self {
            Self::Exponential => Interval::POSITIVE,
            _ => Interval::REAL_LINE,
        }
    }

    pub fn base_measure(&self) -> BaseMeasure {
        match *self {
            Self::Bernoulli => BaseMeasure::CountingBinary,
            Self::Poisson => BaseMeasure::PoissonOne,
            Self::Exponential => BaseMeasure::LebesguePositive,
            Self::GaussianFixedSigma { sigma } => BaseMeasure::GaussianReference { sigma },
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Self::Bernoulli | Self::Poisson)
    }

    /// Sufficient statistic. Defined on the whole real line so that values
    /// outside the nominal support (outliers) still produce finite
    /// log-density differences.
    #[inline]
    pub fn suff_stat(&self, y: f64) -> f64 {
        match *self {
            Self::Bernoulli | Self::Poisson => y,
            Self::Exponential => -y,
            Self::GaussianFixedSigma { sigma } => y / (sigma * sigma),
        }
    }

    /// Log-partition `A(θ)`. No domain check; `+∞` outside `I` for the
    /// exponential family.
    #[inline]
    pub fn log_partition(&self, theta: f64) -> f64 {
        match *self {
            Self::Bernoulli => softplus(theta),
            Self::Poisson => theta.exp_m1(),
            Self::Exponential => {
                if theta > 0.0 {
                    -theta.ln()
                } else {
                    f64::INFINITY
                }
            }
            Self::GaussianFixedSigma { sigma } => theta * theta / (2.0 * sigma * sigma),
        }
    }

    /// `A′(θ) = E_θ[S(Y)]`.
    #[inline]
    pub fn d_log_partition(&self, theta: f64) -> f64 {
        match *self {
            Self::Bernoulli => sigmoid(theta),
            Self::Poisson => theta.exp(),
            Self::Exponential => -1.0 / theta,
            Self::GaussianFixedSigma { sigma } => theta / (sigma * sigma),
        }
    }

    /// `A″(θ) = Var_θ[S(Y)]`.
    #[inline]
    pub fn d2_log_partition(&self, theta: f64) -> f64 {
        match *self {
            Self::Bernoulli => {
                let p = sigmoid(theta);
                p * (1.0 - p)
            }
            Self::Poisson => theta.exp(),
            Self::Exponential => 1.0 / (theta * theta),
            Self::GaussianFixedSigma { sigma } => 1.0 / (sigma * sigma),
        }
    }

    /// Mean of `Y` under `Q_θ`.
    pub fn mean(&self, theta: f64) -> f64 {
        match *self {
            Self::Bernoulli => sigmoid(theta),
            Self::Poisson => theta.exp(),
            Self::Exponential => 1.0 / theta,
            Self::GaussianFixedSigma { .. } => theta,
        }
    }

    pub fn check(&self, what: &'static str, theta: f64) -> Result<()> {
        let i = self.interval();
        if i.contains(theta) {
            Ok(())
        } else {
            Err(Error::domain(what, theta, i))
        }
    }

    /// `log q_θ(y) = S(y)θ − A(θ)` relative to the base measure.
    pub fn log_density(&self, theta: f64, y: f64) -> Result<f64> {
        self.check("theta", theta)?;
        Ok(self.suff_stat(y) * theta - self.log_partition(theta))
    }

    /// Squared Hellinger distance between `Q_θ` and `Q_θ′`,
    /// `1 − exp[A((θ+θ′)/2) − (A(θ)+A(θ′))/2]`.
    pub fn hellinger_sq(&self, theta: f64, theta_p: f64) -> Result<f64> {
        self.check("theta", theta)?;
        self.check("theta'", theta_p)?;
        let mid = 0.5 * (theta + theta_p);
        self.check("(theta+theta')/2", mid)?;
        Ok(self.hellinger_sq_unchecked(theta, theta_p))
    }

    #[inline]
    pub(crate) fn hellinger_sq_unchecked(&self, theta: f64, theta_p: f64) -> f64 {
        if theta == theta_p {
            return 0.0;
        }
        let mid = 0.5 * (theta + theta_p);
        let log_affinity = match *self {
            // The −1 in A cancels.
            Self::Poisson => mid.exp() - 0.5 * (theta.exp() + theta_p.exp()),
            Self::Exponential => 0.5 * (theta.ln() + theta_p.ln()) - mid.ln(),
            Self::GaussianFixedSigma { sigma } => {
                let d = theta - theta_p;
                -d * d / (8.0 * sigma * sigma)
            }
            Self::Bernoulli => {
                self.log_partition(mid)
                    - 0.5 * (self.log_partition(theta) + self.log_partition(theta_p))
            }
        };
        (-log_affinity.min(0.0).exp_m1()).clamp(0.0, 1.0)
    }

    /// Draws `Y ~ Q_θ`.
    pub fn sample<R: Rng + ?Sized>(&self, theta: f64, rng: &mut R) -> Result<f64> {
        self.check("theta", theta)?;
        Ok(match *self {
            Self::Bernoulli => {
                if rng.random::<f64>() < sigmoid(theta) {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Poisson => {
                let lambda = theta.exp();
                Poisson::new(lambda)
                    .map_err(|_| Error::domain("poisson mean", lambda, "(0, 1.8e19)"))?
                    .sample(rng)
            }
            Self::Exponential => Exp::new(theta)
                .map_err(|_| Error::domain("theta", theta, Interval::POSITIVE))?
                .sample(rng),
            Self::GaussianFixedSigma { sigma } => Normal::new(theta, sigma)
                .map_err(|_| Error::domain("theta", theta, Interval::REAL_LINE))?
                .sample(rng),
        })
    }

    /// Approximate median of `Q_θ` used by the median-based estimator.
    pub fn median_approx(&self, theta: f64) -> Result<f64> {
        match self {
            Self::Poisson => {
                self.check("theta", theta)?;
                Ok(self.median_approx_unchecked(theta))
            }
            Self::Exponential => {
                self.check("theta", theta)?;
                Ok(self.median_approx_unchecked(theta))
            }
            other => Err(Error::Unsupported(format!(
                "no median approximation for the {} family",
                other.id()
            ))),
        }
    }

    #[inline]
    pub(crate) fn median_approx_unchecked(&self, theta: f64) -> f64 {
        match self {
            Self::Poisson => theta.exp() + 1.0 / 3.0 - 0.02 * (-theta).exp(),
            Self::Exponential => LN_2 / theta,
            _ => f64::NAN,
        }
    }

    /// The variance-stabilizing reparametrization `γ = v(θ)` with
    /// `v′ = √(A″/8)`.
    pub fn variance_stabilizer(&self) -> Result<GeneralParametrization> {
        let map = match *self {
            Self::GaussianFixedSigma { sigma } => ParamMap::GaussianStabilized { sigma },
            Self::Bernoulli => ParamMap::BernoulliStabilized,
            Self::Poisson => ParamMap::PoissonStabilized,
            Self::Exponential => ParamMap::ExponentialStabilized,
        };
        Ok(GeneralParametrization::new(map))
    }

    /// Parametrization by the mean of `Y`.
    pub fn mean_parametrization(&self) -> GeneralParametrization {
        let map = match self {
            Self::Bernoulli => ParamMap::BernoulliMean,
            Self::Poisson => ParamMap::PoissonMean,
            Self::Exponential => ParamMap::ExponentialMean,
            Self::GaussianFixedSigma { .. } => ParamMap::Identity,
        };
        GeneralParametrization::new(map)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParametrizationKind {
    Mean,
    VarianceStabilizing,
    Custom,
}

/// The map `u: J → I` together with its inverse.
#[derive(Debug, Clone, Copy)]
pub enum ParamMap {
    Identity,
    /// `θ = log γ` (Poisson mean).
    PoissonMean,
    /// `θ = logit γ` (Bernoulli mean).
    BernoulliMean,
    /// `θ = 1/γ` (exponential mean of `Y`).
    ExponentialMean,
    /// `γ = θ / (σ√8)`.
    GaussianStabilized { sigma: f64 },
    /// `γ = arcsin(1/√(1+e^{−θ})) / √2`.
    BernoulliStabilized,
    /// `γ = e^{θ/2} / √2`.
    PoissonStabilized,
    /// `γ = log(θ) / √8`.
    ExponentialStabilized,
    Custom {
        u: fn(f64) -> f64,
        u_inverse: fn(f64) -> f64,
        j: Interval,
    },
}

impl PartialEq for ParamMap {
    fn eq(&self, other: &Self) -> bool {
        use ParamMap::*;
        match (self, other) {
            (GaussianStabilized { sigma: a }, GaussianStabilized { sigma: b }) => a == b,
            (
                Custom { u, u_inverse, j },
                Custom {
                    u: u2,
                    u_inverse: v2,
                    j: j2,
                },
            ) => std::ptr::fn_addr_eq(*u, *u2) && std::ptr::fn_addr_eq(*u_inverse, *v2) && j == j2,
            _ => std::mem::discriminant(self) == std::mem::discriminant(other),
        }
    }
}

/// A general (not necessarily natural) parametrization `R_γ = Q_{u(γ)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralParametrization {
    pub kind: ParametrizationKind,
    pub map: ParamMap,
}

impl GeneralParametrization {
    pub fn new(map: ParamMap) -> Self {
        let kind = match map {
            ParamMap::Identity
            | ParamMap::PoissonMean
            | ParamMap::BernoulliMean
            | ParamMap::ExponentialMean => ParametrizationKind::Mean,
            ParamMap::Custom { .. } => ParametrizationKind::Custom,
            _ => ParametrizationKind::VarianceStabilizing,
        };
        GeneralParametrization { kind, map }
    }

    pub fn custom(u: fn(f64) -> f64, u_inverse: fn(f64) -> f64, j: Interval) -> Self {
        Self::new(ParamMap::Custom { u, u_inverse, j })
    }

    /// Domain `J` of the general parameter.
    pub fn interval_j(&self) -> Interval {
        match self.map {
            ParamMap::Identity | ParamMap::GaussianStabilized { .. } => Interval::REAL_LINE,
            ParamMap::PoissonMean | ParamMap::ExponentialMean | ParamMap::PoissonStabilized => {
                Interval::POSITIVE
            }
            ParamMap::BernoulliMean => Interval::open(0.0, 1.0),
            ParamMap::BernoulliStabilized => {
                Interval::open(0.0, std::f64::consts::FRAC_PI_2 / SQRT_2)
            }
            ParamMap::ExponentialStabilized => Interval::REAL_LINE,
            ParamMap::Custom { j, .. } => j,
        }
    }

    /// `u(γ)` without a domain check.
    #[inline]
    pub fn u(&self, gamma: f64) -> f64 {
        match self.map {
            ParamMap::Identity => gamma,
            ParamMap::PoissonMean => gamma.ln(),
            ParamMap::BernoulliMean => logit(gamma),
            ParamMap::ExponentialMean => 1.0 / gamma,
            ParamMap::GaussianStabilized { sigma } => gamma * sigma * 8f64.sqrt(),
            ParamMap::BernoulliStabilized => {
                let s = (SQRT_2 * gamma).sin();
                logit(s * s)
            }
            ParamMap::PoissonStabilized => 2.0 * (SQRT_2 * gamma).ln(),
            ParamMap::ExponentialStabilized => (8f64.sqrt() * gamma).exp(),
            ParamMap::Custom { u, .. } => u(gamma),
        }
    }

    /// Derivative `u′(γ)`, used by likelihood code for general models.
    pub fn du(&self, gamma: f64) -> f64 {
        match self.map {
            ParamMap::Identity => 1.0,
            ParamMap::PoissonMean => 1.0 / gamma,
            ParamMap::BernoulliMean => 1.0 / (gamma * (1.0 - gamma)),
            ParamMap::ExponentialMean => -1.0 / (gamma * gamma),
            ParamMap::GaussianStabilized { sigma } => sigma * 8f64.sqrt(),
            ParamMap::BernoulliStabilized => {
                let a = SQRT_2 * gamma;
                // d/dγ logit(sin²a) = 4√2 / sin(2a)
                4.0 * SQRT_2 / (2.0 * a).sin()
            }
            ParamMap::PoissonStabilized => 2.0 / gamma,
            ParamMap::ExponentialStabilized => 8f64.sqrt() * (8f64.sqrt() * gamma).exp(),
            ParamMap::Custom { u, .. } => {
                let h = 1e-6 * gamma.abs().max(1.0);
                (u(gamma + h) - u(gamma - h)) / (2.0 * h)
            }
        }
    }

    /// `u⁻¹(θ)`.
    #[inline]
    pub fn u_inverse(&self, theta: f64) -> f64 {
        match self.map {
            ParamMap::Identity => theta,
            ParamMap::PoissonMean => theta.exp(),
            ParamMap::BernoulliMean => sigmoid(theta),
            ParamMap::ExponentialMean => 1.0 / theta,
            ParamMap::GaussianStabilized { sigma } => theta / (sigma * 8f64.sqrt()),
            ParamMap::BernoulliStabilized => sigmoid(theta).sqrt().asin() / SQRT_2,
            ParamMap::PoissonStabilized => (0.5 * theta).exp() / SQRT_2,
            ParamMap::ExponentialStabilized => theta.ln() / 8f64.sqrt(),
            ParamMap::Custom { u_inverse, .. } => u_inverse(theta),
        }
    }

    /// `u(γ)` with a domain check on `γ ∈ J`.
    pub fn to_natural(&self, gamma: f64) -> Result<f64> {
        let j = self.interval_j();
        if !j.contains(gamma) {
            return Err(Error::domain("gamma", gamma, j));
        }
        Ok(self.u(gamma))
    }
}
