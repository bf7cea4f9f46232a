//! Scenario generators, Monte-Carlo risk estimation and report assembly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{hinge_init, median_estimate, mle, OptimizerSettings};
use crate::data::{Dataset, RowFlag};
use crate::error::{Error, Result};
use crate::expfam::{NaturalExpFamily, ParamMap};
use crate::models::{holder_partition_dim, PartitionRegime, RegressionModel, SearchBox};
use crate::numeric::{derive_seed, integrate, integrate_to_infinity, quantile_sorted, sigmoid};
use crate::rho::{rho_estimate, RhoConfig, KAPPA};

/// Built-in scenario identifiers.
pub const SCENARIO_IDS: &[&str] = &[
    "bernoulli_ws",
    "bernoulli_separable",
    "poisson_ws",
    "exponential_ws",
    "bernoulli_outlier",
    "poisson_outlier",
    "exponential_outlier",
    "poisson_contam",
    "exponential_contam",
    "holder_poisson",
];

/// Product of uniform distributions on `[lower_k, upper_k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl UniformBox {
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        UniformBox {
            lower: vec![lo; dim],
            upper: vec![hi; dim],
        }
    }

    pub fn contains(&self, w: &[f64]) -> bool {
        w.len() == self.lower.len()
            && w.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, u))| *l <= *x && *x <= *u)
    }
}

/// Finite mixture of product-uniform laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateLaw {
    pub components: Vec<(f64, UniformBox)>,
}

impl CovariateLaw {
    pub fn single(b: UniformBox) -> Self {
        CovariateLaw {
            components: vec![(1.0, b)],
        }
    }

    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, |(_, b)| b.lower.len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::InvalidConfig("covariate law has no component".into()));
        }
        let d = self.dim();
        let mut total = 0.0;
        for (wgt, b) in &self.components {
            if !(*wgt >= 0.0) {
                return Err(Error::InvalidConfig(format!("negative mixture weight {wgt}")));
            }
            if b.lower.len() != d || b.upper.len() != d {
                return Err(Error::InvalidConfig("mixture components differ in dimension".into()));
            }
            if b.lower.iter().zip(&b.upper).any(|(l, u)| !(l <= u)) {
                return Err(Error::InvalidConfig("empty uniform box".into()));
            }
            total += wgt;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut u: f64 = rng.random();
        let mut chosen = &self.components[self.components.len() - 1].1;
        for (wgt, b) in &self.components {
            if u < *wgt {
                chosen = b;
                break;
            }
            u -= wgt;
        }
        chosen
            .lower
            .iter()
            .zip(&chosen.upper)
            .map(|(l, h)| l + (h - l) * rng.random::<f64>())
            .collect()
    }

    /// Index of the first component whose box contains `w`.
    pub fn component_of(&self, w: &[f64]) -> Option<usize> {
        self.components.iter().position(|(_, b)| b.contains(w))
    }
}

/// Contaminating conditional law `R(· | w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Contaminant {
    /// `base + B` with `B ~ Bernoulli(sigmoid(⟨coef, w⟩))`.
    ShiftedBernoulli { base: f64, coef: Vec<f64> },
    /// Uniform on `[lo, hi]`, independent of `w`.
    Uniform { lo: f64, hi: f64 },
}

/// `R(· | w)` at a fixed covariate.
#[derive(Debug, Clone, PartialEq)]
pub enum ContaminantAt {
    /// Atoms `(y, mass)`.
    PointMasses(Vec<(f64, f64)>),
    Uniform { lo: f64, hi: f64 },
}

impl Contaminant {
    pub fn at(&self, w: &[f64]) -> ContaminantAt {
        match self {
            Contaminant::ShiftedBernoulli { base, coef } => {
                let p = sigmoid(coef.iter().zip(w).map(|(c, x)| c * x).sum());
                ContaminantAt::PointMasses(vec![(*base, 1.0 - p), (base + 1.0, p)])
            }
            Contaminant::Uniform { lo, hi } => ContaminantAt::Uniform { lo: *lo, hi: *hi },
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, w: &[f64], rng: &mut R) -> f64 {
        match self {
            Contaminant::ShiftedBernoulli { base, coef } => {
                let p = sigmoid(coef.iter().zip(w).map(|(c, x)| c * x).sum());
                if rng.random::<f64>() < p {
                    base + 1.0
                } else {
                    *base
                }
            }
            Contaminant::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Corruption {
    None,
    /// One extra observation appended after the clean sample.
    Outlier { w: Vec<f64>, y: f64 },
    /// Each observation independently replaced by a draw from `R` with
    /// probability `rate`.
    Contamination { rate: f64, contaminant: Contaminant },
}

/// The regression function generating the clean data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Truth {
    /// `θ* = θ_η` in the scenario's link model.
    Link { eta: Vec<f64> },
    /// Poisson mean `γ*(w) = 1 + M (2π)^{−α} |sin 2πw|^α`, which lies in the
    /// Hölder class `𝓗_α(M)` on [0, 1].
    Holder { alpha: f64, m: f64 },
}

pub fn holder_target_mean(alpha: f64, m: f64, w: f64) -> f64 {
    let s = (2.0 * std::f64::consts::PI * w).sin().abs();
    1.0 + m * s.powf(alpha) / (2.0 * std::f64::consts::PI).powf(alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub family: NaturalExpFamily,
    pub model: RegressionModel,
    pub truth: Truth,
    pub covariates: CovariateLaw,
    pub corruption: Corruption,
    /// Number of clean observations.
    pub n: usize,
    pub replications: usize,
    pub quadrature_n: usize,
}

pub const DEFAULT_N: usize = 500;
pub const DEFAULT_REPLICATIONS: usize = 500;
pub const FAST_REPLICATIONS: usize = 100;
pub const DEFAULT_QUADRATURE_N: usize = 10_000;
pub const CONTAMINATION_RATE: f64 = 0.05;

fn bernoulli_cubes(separable: bool) -> CovariateLaw {
    let mut comps = Vec::new();
    if !separable {
        comps.push((1.0 / 3.0, UniformBox::cube(5, -0.25, 0.25)));
    }
    let wgt = if separable { 0.5 } else { 1.0 / 3.0 };
    comps.push((wgt, UniformBox::cube(5, 1.75, 2.25)));
    comps.push((wgt, UniformBox::cube(5, -2.25, -1.75)));
    CovariateLaw { components: comps }
}

fn poisson_law() -> CovariateLaw {
    CovariateLaw::single(UniformBox {
        lower: vec![0.2, 0.2, 0.2, 0.1, 0.1],
        upper: vec![0.25, 0.25, 0.3, 0.2, 0.2],
    })
}

fn exponential_law() -> CovariateLaw {
    CovariateLaw::single(UniformBox {
        lower: vec![0.0; 5],
        upper: vec![0.01, 0.01, 0.01, 0.1, 0.1],
    })
}

impl Scenario {
    /// One of the built-in scenarios listed in [`SCENARIO_IDS`].
    pub fn builtin(id: &str) -> Result<Scenario> {
        let (family, model, eta, covariates) = match id {
            "bernoulli_ws" | "bernoulli_outlier" => (
                NaturalExpFamily::Bernoulli,
                RegressionModel::linear(5),
                vec![1.0; 6],
                bernoulli_cubes(false),
            ),
            "bernoulli_separable" => (
                NaturalExpFamily::Bernoulli,
                RegressionModel::linear(5),
                vec![1.0; 6],
                bernoulli_cubes(true),
            ),
            "poisson_ws" | "poisson_outlier" | "poisson_contam" => (
                NaturalExpFamily::Poisson,
                RegressionModel::loglog1pexp(5),
                vec![0.7, 3.0, 4.0, 10.0, 2.0, 5.0],
                poisson_law(),
            ),
            "exponential_ws" | "exponential_outlier" | "exponential_contam" => (
                NaturalExpFamily::Exponential,
                RegressionModel::log1pexp(5),
                vec![0.07, 3.0, 4.0, 6.0, 2.0, 1.0],
                exponential_law(),
            ),
            "holder_poisson" => return Scenario::holder(1.0, 1.0, DEFAULT_N),
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown scenario {other:?}; expected one of {}",
                    SCENARIO_IDS.join(", ")
                )))
            }
        };
        let corruption = match id {
            "bernoulli_outlier" => Corruption::Outlier {
                w: vec![1000.0; 5],
                y: -1.0,
            },
            "poisson_outlier" => Corruption::Outlier {
                w: vec![0.1; 5],
                y: 200.0,
            },
            "exponential_outlier" => Corruption::Outlier {
                w: vec![5e-3, 5e-3, 5e-3, 5e-2, 5e-2],
                y: 1000.0,
            },
            "poisson_contam" => Corruption::Contamination {
                rate: CONTAMINATION_RATE,
                contaminant: Contaminant::ShiftedBernoulli {
                    base: 80.0,
                    coef: vec![1.0, -1.0, 0.0, -1.0, 1.0],
                },
            },
            "exponential_contam" => Corruption::Contamination {
                rate: CONTAMINATION_RATE,
                contaminant: Contaminant::Uniform { lo: 50.0, hi: 60.0 },
            },
            _ => Corruption::None,
        };
        Ok(Scenario {
            id: id.to_string(),
            family,
            model,
            truth: Truth::Link { eta },
            covariates,
            corruption,
            n: DEFAULT_N,
            replications: DEFAULT_REPLICATIONS,
            quadrature_n: DEFAULT_QUADRATURE_N,
        })
    }

    /// Poisson regression on `W ~ U[0, 1]` with a Hölder mean, fitted by a
    /// piecewise-constant mean model with `D(α, M, n)` cells.
    pub fn holder(alpha: f64, m: f64, n: usize) -> Result<Scenario> {
        let fam = NaturalExpFamily::Poisson;
        let d = holder_partition_dim(alpha, m, n, KAPPA, PartitionRegime::PoissonMean)?;
        let par = crate::expfam::GeneralParametrization::new(ParamMap::PoissonMean);
        let model = RegressionModel::piecewise_constant(
            d,
            &fam,
            Some(par),
            SearchBox::uniform(d, 0.01, 50.0),
        )?;
        Ok(Scenario {
            id: "holder_poisson".into(),
            family: fam,
            model,
            truth: Truth::Holder { alpha, m },
            covariates: CovariateLaw::single(UniformBox::cube(1, 0.0, 1.0)),
            corruption: Corruption::None,
            n,
            replications: DEFAULT_REPLICATIONS,
            quadrature_n: DEFAULT_QUADRATURE_N,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.covariates.validate()?;
        if self.covariates.dim() != self.model.covariate_dim {
            return Err(Error::DimensionMismatch {
                expected: self.model.covariate_dim,
                got: self.covariates.dim(),
                context: "covariate law",
            });
        }
        if let Truth::Link { eta } = &self.truth {
            if eta.len() != self.model.dim_p {
                return Err(Error::DimensionMismatch {
                    expected: self.model.dim_p,
                    got: eta.len(),
                    context: "true parameter",
                });
            }
        }
        if let Corruption::Contamination { rate, .. } = &self.corruption {
            if !(0.0..=1.0).contains(rate) {
                return Err(Error::domain("contamination rate", *rate, "[0, 1]"));
            }
        }
        if self.n == 0 || self.quadrature_n == 0 {
            return Err(Error::InvalidConfig("n and quadrature_n must be positive".into()));
        }
        Ok(())
    }

    /// θ*(w).
    pub fn theta_star(&self, w: &[f64]) -> f64 {
        match &self.truth {
            Truth::Link { eta } => self.model.eval_unchecked(eta, w),
            Truth::Holder { alpha, m } => holder_target_mean(*alpha, *m, w[0]).ln(),
        }
    }

    /// The clean version of this scenario.
    pub fn clean(&self) -> Scenario {
        Scenario {
            corruption: Corruption::None,
            ..self.clone()
        }
    }
}

/// `n` i.i.d. draws `Wᵢ ~ P_W`, `Yᵢ ~ Q_{θ*(Wᵢ)}`.
pub fn gen_well_specified(s: &Scenario, seed: u64) -> Result<Dataset> {
    if s.corruption != Corruption::None {
        return Err(Error::Precondition(format!(
            "scenario {} is corrupted; use generate",
            s.id
        )));
    }
    clean_sample(s, seed)
}

fn clean_sample(s: &Scenario, seed: u64) -> Result<Dataset> {
    s.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "clean", 0));
    let mut ds = Dataset::with_capacity(s.covariates.dim(), s.n + 1);
    for _ in 0..s.n {
        let w = s.covariates.sample(&mut rng);
        let y = s.family.sample(s.theta_star(&w), &mut rng)?;
        ds.push(&w, y, RowFlag::Clean)?;
    }
    Ok(ds)
}

/// Appends the scenario's outlier to `ds`.
pub fn inject_outlier(ds: &Dataset, s: &Scenario) -> Result<Dataset> {
    let Corruption::Outlier { w, y } = &s.corruption else {
        return Err(Error::Precondition(format!("scenario {} has no outlier", s.id)));
    };
    let mut out = ds.clone();
    out.push(w, *y, RowFlag::Outlier)?;
    Ok(out)
}

/// Clean sample in which each response is, with probability `rate`,
/// replaced by a draw from `R(· | Wᵢ)`. The clean rows coincide with those of
/// [`gen_well_specified`] under the same seed.
pub fn gen_contaminated(s: &Scenario, seed: u64) -> Result<Dataset> {
    let Corruption::Contamination { rate, contaminant } = &s.corruption else {
        return Err(Error::Precondition(format!(
            "scenario {} is not a contamination scenario",
            s.id
        )));
    };
    let mut ds = clean_sample(s, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "contamination", 0));
    for i in 0..ds.len() {
        let hit = rng.random::<f64>() < *rate;
        let y = contaminant.sample(ds.w(i), &mut rng);
        if hit {
            ds.set_row(i, y, RowFlag::Contaminated);
        }
    }
    Ok(ds)
}

/// Data for any scenario.
pub fn generate(s: &Scenario, seed: u64) -> Result<Dataset> {
    match &s.corruption {
        Corruption::None => gen_well_specified(s, seed),
        Corruption::Outlier { .. } => inject_outlier(&clean_sample(s, seed)?, s),
        Corruption::Contamination { .. } => gen_contaminated(s, seed),
    }
}

/// `(r̃ − r̂)/r̂`.
pub fn excess(r_tilde: f64, r_hat: f64) -> Result<f64> {
    if !(r_hat > 0.0) {
        return Err(Error::domain("r_hat", r_hat, "(0, inf)"));
    }
    Ok((r_tilde - r_hat) / r_hat)
}

/// Density of `Q_θ` against counting measure (discrete families) or
/// Lebesgue measure (continuous ones).
fn density(fam: &NaturalExpFamily, theta: f64, y: f64, log_fact: f64) -> f64 {
    match *fam {
        NaturalExpFamily::Poisson => (y * theta - theta.exp() - log_fact).exp(),
        NaturalExpFamily::Bernoulli => {
            let p = sigmoid(theta);
            if y == 1.0 {
                p
            } else if y == 0.0 {
                1.0 - p
            } else {
                0.0
            }
        }
        NaturalExpFamily::Exponential => {
            if y >= 0.0 {
                theta * (-theta * y).exp()
            } else {
                0.0
            }
        }
        NaturalExpFamily::GaussianFixedSigma { sigma } => {
            let z = (y - theta) / sigma;
            (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
        }
    }
}

/// Squared Hellinger distance between `(1−rate)·Q_{θ*} + rate·R` and
/// `Q_{θ̂}`. Parts of `R` singular to the family's dominating measure add
/// nothing to the affinity.
pub fn hellinger_mixture_sq(
    fam: &NaturalExpFamily,
    theta_hat: f64,
    theta_star: f64,
    contam: &ContaminantAt,
    rate: f64,
) -> Result<f64> {
    fam.check("theta_hat", theta_hat)?;
    fam.check("theta_star", theta_star)?;
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::domain("rate", rate, "[0, 1]"));
    }
    if rate == 0.0 {
        return Ok(fam.hellinger_sq_unchecked(theta_star, theta_hat));
    }
    let a = 1.0 - rate;
    let affinity = match *fam {
        NaturalExpFamily::Poisson => poisson_mixture_affinity(theta_hat, theta_star, contam, a),
        NaturalExpFamily::Bernoulli => {
            let mut s = 0.0;
            for y in [0.0, 1.0] {
                let r = atom_mass(contam, y);
                let m = a * density(fam, theta_star, y, 0.0) + rate * r;
                s += (m * density(fam, theta_hat, y, 0.0)).sqrt();
            }
            s
        }
        _ => continuous_mixture_affinity(fam, theta_hat, theta_star, contam, a),
    };
    Ok((1.0 - affinity).clamp(0.0, 1.0))
}

fn atom_mass(contam: &ContaminantAt, y: f64) -> f64 {
    match contam {
        ContaminantAt::PointMasses(atoms) => atoms
            .iter()
            .filter(|(v, _)| *v == y)
            .map(|(_, p)| *p)
            .sum(),
        ContaminantAt::Uniform { .. } => 0.0,
    }
}

fn poisson_mixture_affinity(
    theta_hat: f64,
    theta_star: f64,
    contam: &ContaminantAt,
    a: f64,
) -> f64 {
    let rate = 1.0 - a;
    let fam = NaturalExpFamily::Poisson;
    // Atoms at non-negative integers only; the rest is singular.
    let last_atom = match contam {
        ContaminantAt::PointMasses(atoms) => atoms
            .iter()
            .filter(|(v, p)| *p > 0.0 && *v >= 0.0 && v.fract() == 0.0)
            .map(|(v, _)| *v)
            .fold(0.0, f64::max),
        ContaminantAt::Uniform { .. } => 0.0,
    };
    let lam = (0.5 * (theta_hat + theta_star)).exp();
    let mut s = 0.0;
    let mut log_fact = 0.0;
    let mut y = 0u64;
    loop {
        let yf = y as f64;
        let m = a * density(&fam, theta_star, yf, log_fact) + rate * atom_mass(contam, yf);
        let term = (m * density(&fam, theta_hat, yf, log_fact)).sqrt();
        s += term;
        // Beyond the atoms the summand is √a times a sequence with
        // consecutive ratio √(λ*λ̂)/(y+1); bound the tail geometrically.
        if yf >= last_atom && yf + 2.0 > lam {
            let r = lam / (yf + 2.0);
            if r < 1.0 && term * r / (1.0 - r) < 1e-13 {
                break;
            }
        }
        y += 1;
        log_fact += (y as f64).ln();
        if y > 1_000_000 {
            break;
        }
    }
    s
}

fn continuous_mixture_affinity(
    fam: &NaturalExpFamily,
    theta_hat: f64,
    theta_star: f64,
    contam: &ContaminantAt,
    a: f64,
) -> f64 {
    let rate = 1.0 - a;
    let (lo, hi, dens) = match contam {
        ContaminantAt::Uniform { lo, hi } if hi > lo => (*lo, *hi, 1.0 / (hi - lo)),
        _ => (0.0, 0.0, 0.0),
    };
    let f = |y: f64| {
        let r = if dens > 0.0 && (lo..=hi).contains(&y) {
            dens
        } else {
            0.0
        };
        ((a * density(fam, theta_star, y, 0.0) + rate * r) * density(fam, theta_hat, y, 0.0))
            .sqrt()
    };
    let tol = 1e-11;
    let support_lo = match fam {
        NaturalExpFamily::Exponential => 0.0,
        _ => f64::NEG_INFINITY,
    };
    let mut cuts = vec![];
    if dens > 0.0 {
        cuts.push(lo.max(support_lo));
        cuts.push(hi.max(support_lo));
    }
    cuts.dedup();
    let mut s = 0.0;
    let first = cuts.first().copied().unwrap_or(theta_star.max(support_lo));
    if support_lo.is_finite() {
        s += integrate(f, support_lo, first, tol);
    } else {
        s += integrate_to_infinity(|t| f(-t), -first, tol);
    }
    for win in cuts.windows(2) {
        s += integrate(f, win[0], win[1], tol);
    }
    s += integrate_to_infinity(f, cuts.last().copied().unwrap_or(first), tol);
    s
}

/// `h²(P*, P_{θ*})`, the distance between the data law and the model at the
/// true parameter, averaged over `quadrature_n` fresh covariates.
pub fn approximation_error(s: &Scenario, seed: u64) -> Result<f64> {
    let Corruption::Contamination { rate, contaminant } = &s.corruption else {
        return Ok(0.0);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "approximation", 0));
    let mut acc = 0.0;
    for _ in 0..s.quadrature_n {
        let w = s.covariates.sample(&mut rng);
        let t = s.theta_star(&w);
        acc += hellinger_mixture_sq(&s.family, t, t, &contaminant.at(&w), *rate)?;
    }
    Ok(acc / s.quadrature_n as f64)
}

/// Estimator identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Rho,
    Mle,
    Median,
}

impl Estimator {
    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "rho" => Ok(Estimator::Rho),
            "mle" => Ok(Estimator::Mle),
            "median" => Ok(Estimator::Median),
            other => Err(Error::InvalidConfig(format!(
                "unknown estimator {other:?}; expected rho, mle or median"
            ))),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Estimator::Rho => "rho",
            Estimator::Mle => "mle",
            Estimator::Median => "median",
        }
    }

    pub fn supports(&self, fam: &NaturalExpFamily) -> bool {
        match self {
            Estimator::Median => {
                matches!(fam, NaturalExpFamily::Poisson | NaturalExpFamily::Exponential)
            }
            _ => true,
        }
    }
}

/// Settings shared by the Monte-Carlo drivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub replications: usize,
    pub quadrature_n: usize,
    pub seed: u64,
    pub rho: RhoConfig,
    pub median: OptimizerSettings,
}

impl McConfig {
    pub fn for_scenario(s: &Scenario, seed: u64) -> Self {
        McConfig {
            replications: s.replications,
            quadrature_n: s.quadrature_n,
            seed,
            rho: RhoConfig {
                seed,
                ..RhoConfig::default()
            },
            median: OptimizerSettings::default(),
        }
    }
}

/// Outcome of one estimator on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    /// `None` when the estimator failed (e.g. the MLE does not exist).
    pub risk: Option<f64>,
    /// Risk of the last iterate when the estimator diverged.
    pub divergent_risk: Option<f64>,
    pub iterations: Option<usize>,
    pub upsilon: Option<f64>,
    pub seconds: f64,
    pub failure: Option<String>,
    pub eta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub scenario: String,
    pub estimator: String,
    pub replications: usize,
    pub n: usize,
    /// Mean risk over successful replications (`R_n`, or `R̄_n` under
    /// contamination).
    pub r_n: Option<f64>,
    pub std_error: Option<f64>,
    /// Mean risk counting the last iterate of diverged fits.
    pub r_n_with_divergent: Option<f64>,
    /// `𝓔` against the ρ-estimator on the same replications.
    pub excess_vs_rho: Option<f64>,
    /// (Q1, median, Q3, max) of the iteration counts.
    pub iter_quartiles: Option<[f64; 4]>,
    pub mean_seconds: f64,
    pub failures: usize,
    /// Fits with `υ ≤ κ/25`.
    pub certified: Option<usize>,
    pub max_upsilon: Option<f64>,
    /// Risks are averages of `h²` over the covariate law of the clean
    /// observations.
    pub risk_normalization: String,
    pub per_replication: Vec<RepOutcome>,
}

fn now() -> Option<std::time::Instant> {
    #[cfg(not(target_arch = "wasm32"))]
    {
        Some(std::time::Instant::now())
    }
    #[cfg(target_arch = "wasm32")]
    {
        None
    }
}

fn elapsed(t: Option<std::time::Instant>) -> f64 {
    t.map_or(0.0, |t| t.elapsed().as_secs_f64())
}

/// Risk of `eta` against the scenario's data law, on shared covariates.
fn risk_on(s: &Scenario, eta: &[f64], quad: &[Vec<f64>]) -> f64 {
    let mut acc = 0.0;
    for w in quad {
        let ts = s.theta_star(w);
        let th = s.model.eval_unchecked(eta, w);
        let h = if !s.family.interval().contains(th) {
            1.0
        } else {
            match &s.corruption {
                Corruption::Contamination { rate, contaminant } => {
                    hellinger_mixture_sq(&s.family, th, ts, &contaminant.at(w), *rate)
                        .unwrap_or(1.0)
                }
                _ => s.family.hellinger_sq_unchecked(ts, th),
            }
        };
        acc += if h.is_nan() { 1.0 } else { h };
    }
    acc / quad.len() as f64
}

/// Starting point of the ρ-iteration: the hinge initializer for Bernoulli
/// data, the median-based estimate otherwise, the cell means for
/// piecewise-constant models.
pub fn rho_start(
    data: &Dataset,
    fam: &NaturalExpFamily,
    model: &RegressionModel,
    median_eta: Option<&[f64]>,
) -> Result<Vec<f64>> {
    use crate::models::ModelKind;
    let mut eta = if model.kind == ModelKind::PiecewiseConstant {
        let d = model.dim_p;
        let mut sums = vec![0.0; d];
        let mut counts = vec![0usize; d];
        for (w, y, _) in data.rows() {
            let j = model.cell_of(w[0]);
            sums[j] += y;
            counts[j] += 1;
        }
        let total = data.ys().iter().sum::<f64>() / data.len().max(1) as f64;
        let raw: Vec<f64> = (0..d)
            .map(|j| {
                let mean = if counts[j] > 0 {
                    sums[j] / counts[j] as f64
                } else {
                    total
                };
                match &model.parametrization {
                    Some(p) => p.u_inverse(fam.mean_parametrization().u(mean)),
                    None => fam.mean_parametrization().u(mean),
                }
            })
            .collect();
        raw.into_iter()
            .map(|v| if v.is_finite() { v } else { 1.0 })
            .collect()
    } else if *fam == NaturalExpFamily::Bernoulli {
        hinge_init(data)?
    } else if let Some(m) = median_eta {
        m.to_vec()
    } else {
        vec![0.0; model.dim_p]
    };
    model.search_box.clip(&mut eta);
    Ok(eta)
}

/// Runs every estimator in `estimators` on the same replications.
pub fn risk_mc_compare(
    s: &Scenario,
    estimators: &[Estimator],
    cfg: &McConfig,
) -> Result<Vec<RiskReport>> {
    s.validate()?;
    cfg.rho.validate()?;
    if cfg.replications == 0 || cfg.quadrature_n == 0 {
        return Err(Error::InvalidConfig(
            "replications and quadrature_n must be positive".into(),
        ));
    }
    for e in estimators {
        if !e.supports(&s.family) {
            return Err(Error::Unsupported(format!(
                "estimator {} is not available for the {} family",
                e.id(),
                s.family.id()
            )));
        }
    }
    let run = |rep: usize| run_replication(s, estimators, cfg, rep);
    #[cfg(feature = "parallel")]
    let per_rep: Vec<Result<Vec<RepOutcome>>> = {
        use rayon::prelude::*;
        (0..cfg.replications).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_rep: Vec<Result<Vec<RepOutcome>>> = (0..cfg.replications).map(run).collect();
    let mut table: Vec<Vec<RepOutcome>> = vec![Vec::with_capacity(cfg.replications); estimators.len()];
    for r in per_rep {
        for (k, o) in r?.into_iter().enumerate() {
            table[k].push(o);
        }
    }
    let mut reports: Vec<RiskReport> = estimators
        .iter()
        .zip(table)
        .map(|(e, outs)| summarize(s, *e, outs))
        .collect();
    if let Some(k) = estimators.iter().position(|e| *e == Estimator::Rho) {
        let base = reports[k].r_n;
        let rho_risks: Vec<Option<f64>> =
            reports[k].per_replication.iter().map(|o| o.risk).collect();
        for r in reports.iter_mut() {
            r.excess_vs_rho = paired_excess(&rho_risks, &r.per_replication, base);
        }
    }
    Ok(reports)
}

/// `𝓔` computed on replications where both fits succeeded.
fn paired_excess(rho: &[Option<f64>], other: &[RepOutcome], base: Option<f64>) -> Option<f64> {
    let (mut a, mut b, mut k) = (0.0, 0.0, 0usize);
    for (r, o) in rho.iter().zip(other) {
        if let (Some(r), Some(x)) = (r, o.risk) {
            a += r;
            b += x;
            k += 1;
        }
    }
    if k == 0 || base.is_none() {
        return None;
    }
    excess(b / k as f64, a / k as f64).ok()
}

/// Same as [`risk_mc_compare`] with a single estimator.
pub fn risk_mc(s: &Scenario, estimator: Estimator, cfg: &McConfig) -> Result<RiskReport> {
    Ok(risk_mc_compare(s, &[estimator], cfg)?.remove(0))
}

/// Seed of replication `rep`: the scenario id and the index are mixed into
/// the master seed.
pub fn replication_seed(master: u64, scenario_id: &str, rep: usize) -> u64 {
    derive_seed(master, scenario_id, rep as u64)
}

fn run_replication(
    s: &Scenario,
    estimators: &[Estimator],
    cfg: &McConfig,
    rep: usize,
) -> Result<Vec<RepOutcome>> {
    let seed = replication_seed(cfg.seed, &s.id, rep);
    let data = generate(s, seed)?;
    let mut qrng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "quadrature", 0));
    let quad: Vec<Vec<f64>> = (0..cfg.quadrature_n)
        .map(|_| s.covariates.sample(&mut qrng))
        .collect();

    let need_median = estimators.contains(&Estimator::Median)
        || (estimators.contains(&Estimator::Rho)
            && s.family != NaturalExpFamily::Bernoulli
            && s.model.kind != crate::models::ModelKind::PiecewiseConstant);
    let median = if need_median {
        let t = now();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "median", 0));
        let m = median_estimate(&data, &s.family, &s.model, &cfg.median, &mut rng);
        Some((m, elapsed(t)))
    } else {
        None
    };

    let mut out = Vec::with_capacity(estimators.len());
    for e in estimators {
        let o = match e {
            Estimator::Median => match median.as_ref().expect("median computed") {
                (Ok(m), secs) => RepOutcome {
                    risk: Some(risk_on(s, &m.eta, &quad)),
                    divergent_risk: None,
                    iterations: None,
                    upsilon: None,
                    seconds: *secs,
                    failure: None,
                    eta: Some(m.eta.clone()),
                },
                (Err(err), secs) => failed(err.to_string(), *secs),
            },
            Estimator::Mle => {
                let t = now();
                match mle(&data, &s.family, &s.model) {
                    Ok(r) => match &r.eta_hat {
                        Some(eta) => RepOutcome {
                            risk: Some(risk_on(s, eta, &quad)),
                            divergent_risk: None,
                            iterations: Some(r.newton_iters),
                            upsilon: None,
                            seconds: elapsed(t),
                            failure: None,
                            eta: Some(eta.clone()),
                        },
                        None => RepOutcome {
                            risk: None,
                            divergent_risk: Some(risk_on(s, &r.last_eta, &quad)),
                            iterations: Some(r.newton_iters),
                            upsilon: None,
                            seconds: elapsed(t),
                            failure: Some(if r.nonexistence {
                                "nonexistence".into()
                            } else {
                                "no convergence".into()
                            }),
                            eta: Some(r.last_eta.clone()),
                        },
                    },
                    Err(err) => failed(err.to_string(), elapsed(t)),
                }
            }
            Estimator::Rho => {
                let t = now();
                let med_secs = median.as_ref().map_or(0.0, |(_, s)| *s);
                let med_eta = median
                    .as_ref()
                    .and_then(|(m, _)| m.as_ref().ok())
                    .map(|m| m.eta.as_slice());
                let fit = rho_start(&data, &s.family, &s.model, med_eta).and_then(|eta0| {
                    let rc = RhoConfig {
                        seed: derive_seed(seed, "rho", 0),
                        ..cfg.rho.clone()
                    };
                    rho_estimate(&data, &s.family, &s.model, &eta0, &rc)
                });
                match fit {
                    Ok(f) => RepOutcome {
                        risk: Some(risk_on(s, &f.eta_hat, &quad)),
                        divergent_risk: None,
                        iterations: Some(f.iterations),
                        upsilon: Some(f.upsilon_hat),
                        seconds: elapsed(t) + med_secs,
                        failure: None,
                        eta: Some(f.eta_hat),
                    },
                    Err(err) => failed(err.to_string(), elapsed(t) + med_secs),
                }
            }
        };
        out.push(o);
    }
    Ok(out)
}

fn failed(msg: String, seconds: f64) -> RepOutcome {
    RepOutcome {
        risk: None,
        divergent_risk: None,
        iterations: None,
        upsilon: None,
        seconds,
        failure: Some(msg),
        eta: None,
    }
}

fn summarize(s: &Scenario, e: Estimator, outs: Vec<RepOutcome>) -> RiskReport {
    let risks: Vec<f64> = outs.iter().filter_map(|o| o.risk).collect();
    let k = risks.len();
    let (r_n, std_error) = if k > 0 {
        let mean = risks.iter().sum::<f64>() / k as f64;
        let se = if k > 1 {
            let var = risks.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
            (var / k as f64).sqrt()
        } else {
            f64::NAN
        };
        (Some(mean), Some(se))
    } else {
        (None, None)
    };
    let all: Vec<f64> = outs
        .iter()
        .filter_map(|o| o.risk.or(o.divergent_risk))
        .collect();
    let r_n_with_divergent = if all.is_empty() {
        None
    } else {
        Some(all.iter().sum::<f64>() / all.len() as f64)
    };
    let iter_quartiles = if e == Estimator::Rho {
        let mut its: Vec<f64> = outs
            .iter()
            .filter_map(|o| o.iterations.map(|v| v as f64))
            .collect();
        its.sort_by(|a, b| a.total_cmp(b));
        (!its.is_empty()).then(|| {
            [
                quantile_sorted(&its, 0.25),
                quantile_sorted(&its, 0.5),
                quantile_sorted(&its, 0.75),
                its[its.len() - 1],
            ]
        })
    } else {
        None
    };
    let ups: Vec<f64> = outs.iter().filter_map(|o| o.upsilon).collect();
    let (certified, max_upsilon) = if ups.is_empty() {
        (None, None)
    } else {
        (
            Some(ups.iter().filter(|u| **u <= KAPPA / 25.0).count()),
            Some(ups.iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
        )
    };
    let mean_seconds = outs.iter().map(|o| o.seconds).sum::<f64>() / outs.len().max(1) as f64;
    RiskReport {
        scenario: s.id.clone(),
        estimator: e.id().into(),
        replications: outs.len(),
        n: s.n,
        r_n,
        std_error,
        r_n_with_divergent,
        excess_vs_rho: None,
        iter_quartiles,
        mean_seconds,
        failures: outs.len() - k,
        certified,
        max_upsilon,
        risk_normalization: format!("per clean observation (n = {})", s.n),
        per_replication: outs,
    }
}

/// Result of one Hölder-scenario fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    pub risk: f64,
    pub cells: usize,
    pub iterations: usize,
    pub upsilon: f64,
}

/// Fits the piecewise-constant Poisson mean model with `D(α, M, n)` cells
/// by ρ-estimation and returns its `h²`-risk against the Hölder target.
pub fn holder_scenario_fit(
    alpha: f64,
    m: f64,
    n: usize,
    seed: u64,
    quadrature_n: usize,
    rho: &RhoConfig,
) -> Result<HolderFit> {
    let mut s = Scenario::holder(alpha, m, n)?;
    s.quadrature_n = quadrature_n;
    let data = gen_well_specified(&s, seed)?;
    let eta0 = rho_start(&data, &s.family, &s.model, None)?;
    let rc = RhoConfig {
        seed: derive_seed(seed, "rho", 0),
        ..rho.clone()
    };
    let fit = rho_estimate(&data, &s.family, &s.model, &eta0, &rc)?;
    let mut qrng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "quadrature", 0));
    let quad: Vec<Vec<f64>> = (0..quadrature_n)
        .map(|_| s.covariates.sample(&mut qrng))
        .collect();
    Ok(HolderFit {
        risk: risk_on(&s, &fit.eta_hat, &quad),
        cells: s.model.dim_p,
        iterations: fit.iterations,
        upsilon: fit.upsilon_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn excess_examples() {
        assert!((excess(0.003, 0.0015).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(excess(0.2, 0.2).unwrap(), 0.0);
        assert!((excess(0.0015 * 131.0, 0.0015).unwrap() - 130.0).abs() < 1e-9);
        assert!(excess(1.0, 0.0).is_err());
    }

    #[test]
    fn builtins_validate() {
        for id in SCENARIO_IDS {
            let s = Scenario::builtin(id).unwrap();
            s.validate().unwrap();
        }
        assert!(Scenario::builtin("nope").is_err());
    }

    #[test]
    fn bernoulli_boxes_are_balanced() {
        let s = Scenario::builtin("bernoulli_ws").unwrap();
        let ds = gen_well_specified(&s, 3).unwrap();
        let mut counts = [0usize; 3];
        for (w, _, _) in ds.rows() {
            counts[s.covariates.component_of(w).expect("inside a box")] += 1;
        }
        for c in counts {
            assert!((c as f64 / 500.0 - 1.0 / 3.0).abs() < 0.07, "{counts:?}");
        }
    }

    #[test]
    fn poisson_covariates_respect_ranges() {
        let s = Scenario::builtin("poisson_ws").unwrap();
        let ds = gen_well_specified(&s, 11).unwrap();
        for (w, y, _) in ds.rows() {
            assert!((0.2..=0.3).contains(&w[2]));
            assert!(y >= 0.0 && y.fract() == 0.0);
        }
    }

    #[test]
    fn outliers_are_appended() {
        for (id, y) in [
            ("bernoulli_outlier", -1.0),
            ("poisson_outlier", 200.0),
            ("exponential_outlier", 1000.0),
        ] {
            let s = Scenario::builtin(id).unwrap();
            let ds = generate(&s, 5).unwrap();
            assert_eq!(ds.len(), 501);
            assert_eq!(ds.y(500), y);
            assert_eq!(ds.flag(500), RowFlag::Outlier);
            assert_eq!(ds.count_flag(RowFlag::Outlier), 1);
        }
    }

    #[test]
    fn contaminated_values_have_the_right_support() {
        let s = Scenario::builtin("poisson_contam").unwrap();
        let ds = generate(&s, 9).unwrap();
        let k = ds.count_flag(RowFlag::Contaminated);
        assert!((k as f64 / 500.0 - 0.05).abs() <= 0.02, "{k}");
        for (_, y, f) in ds.rows() {
            if f == RowFlag::Contaminated {
                assert!(y == 80.0 || y == 81.0);
            }
        }
        let s = Scenario::builtin("exponential_contam").unwrap();
        let ds = generate(&s, 9).unwrap();
        for (_, y, f) in ds.rows() {
            if f == RowFlag::Contaminated {
                assert!((50.0..=60.0).contains(&y));
            }
        }
    }

    #[test]
    fn zero_rate_mixture_is_plain_hellinger() {
        let fam = NaturalExpFamily::Poisson;
        let c = ContaminantAt::PointMasses(vec![(80.0, 1.0)]);
        let a = hellinger_mixture_sq(&fam, 0.3, 1.1, &c, 0.0).unwrap();
        assert_eq!(a, fam.hellinger_sq(1.1, 0.3).unwrap());
    }

    #[test]
    fn mixture_sum_matches_plain_formula_when_contaminant_is_far() {
        // rate tiny, contaminant far: close to the plain distance.
        let fam = NaturalExpFamily::Exponential;
        let c = ContaminantAt::Uniform { lo: 50.0, hi: 60.0 };
        let a = hellinger_mixture_sq(&fam, 0.8, 1.3, &c, 1e-9).unwrap();
        let b = fam.hellinger_sq(0.8, 1.3).unwrap();
        assert!((a - b).abs() < 1e-8, "{a} {b}");
    }

    #[test]
    fn holder_target_has_the_stated_constant() {
        for alpha in [0.5, 1.0] {
            let mut worst: f64 = 0.0;
            for k in 0..400 {
                let x = k as f64 / 400.0;
                let y = x + 1e-3;
                let d = (holder_target_mean(alpha, 2.0, x) - holder_target_mean(alpha, 2.0, y)).abs();
                worst = worst.max(d / (1e-3f64).powf(alpha));
            }
            assert!(worst <= 2.0 + 1e-9, "{worst}");
        }
    }
}
