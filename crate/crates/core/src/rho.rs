//! ρ-estimation: the function ψ, the test statistic T, the criterion υ and
//! the iterative search for an estimator whose υ is small.
//!
//! For two parameter vectors η and η′ the statistic is
//!
//! ```text
//! T(X, η, η′) = Σᵢ ψ(√(q_{θ′(Wᵢ)}(Yᵢ) / q_{θ(Wᵢ)}(Yᵢ))),   ψ(x) = (x − 1)/(x + 1)
//! ```
//!
//! and `υ(X, η) = sup_{η′} T(X, η, η′)`. Density ratios are formed in log
//! space: with `ℓ = S(y)(θ′ − θ) − (A(θ′) − A(θ))` each term equals
//! `tanh(ℓ/4)`, which keeps T exactly antisymmetric in (η, η′).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::cmaes::{cmaes_maximize_multi, OptimizerSettings};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::expfam::NaturalExpFamily;
use crate::models::{ModelKind, RegressionModel, SearchBox};
use crate::numeric::derive_seed;

/// `280√2 + 74`.
pub const KAPPA: f64 = 280.0 * std::f64::consts::SQRT_2 + 74.0;

/// ψ on `[0, +∞]`.
pub fn psi(x: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::domain("x", x, "[0, +inf]"));
    }
    if x == f64::INFINITY {
        return Ok(1.0);
    }
    Ok((x - 1.0) / (x + 1.0))
}

/// ψ(√(q′/q)) from the two log-densities, with `0/0 = 1` and `a/0 = +∞`.
#[inline]
pub fn psi_sqrt_ratio(log_q_new: f64, log_q_old: f64) -> f64 {
    match (log_q_new == f64::NEG_INFINITY, log_q_old == f64::NEG_INFINITY) {
        (true, true) => 0.0,
        (false, true) => 1.0,
        (true, false) => -1.0,
        (false, false) => (0.25 * (log_q_new - log_q_old)).tanh(),
    }
}

#[inline]
fn term(s: f64, theta: f64, a: f64, theta_p: f64, a_p: f64) -> f64 {
    let inf_old = a == f64::INFINITY;
    let inf_new = a_p == f64::INFINITY;
    if inf_old || inf_new {
        return match (inf_new, inf_old) {
            (true, true) => 0.0,
            (false, true) => 1.0,
            _ => -1.0,
        };
    }
    let l = s * (theta_p - theta) - (a_p - a);
    if l.is_nan() {
        0.0
    } else {
        (0.25 * l).tanh()
    }
}

/// T(X, η, ·) with the η side precomputed.
pub struct TStatistic<'a> {
    fam: NaturalExpFamily,
    model: &'a RegressionModel,
    data: &'a Dataset,
    s: Vec<f64>,
    theta: Vec<f64>,
    a: Vec<f64>,
}

impl<'a> TStatistic<'a> {
    pub fn new(
        data: &'a Dataset,
        fam: &NaturalExpFamily,
        model: &'a RegressionModel,
        eta: &[f64],
    ) -> Result<Self> {
        check_model_data(data, model, eta)?;
        let n = data.len();
        let mut s = Vec::with_capacity(n);
        let mut theta = Vec::with_capacity(n);
        let mut a = Vec::with_capacity(n);
        for i in 0..n {
            let t = model.eval_unchecked(eta, data.w(i));
            if !fam.interval().contains(t) {
                return Err(Error::DomainAtIndex {
                    index: i,
                    value: t,
                    domain: fam.interval().to_string(),
                });
            }
            s.push(fam.suff_stat(data.y(i)));
            theta.push(t);
            a.push(fam.log_partition(t));
        }
        Ok(TStatistic {
            fam: *fam,
            model,
            data,
            s,
            theta,
            a,
        })
    }

    /// T(X, η, η′), checked: a parameter outside `I` is an error naming the
    /// offending observation.
    pub fn eval(&self, eta_p: &[f64]) -> Result<f64> {
        if eta_p.len() != self.model.dim_p {
            return Err(Error::DimensionMismatch {
                expected: self.model.dim_p,
                got: eta_p.len(),
                context: "parameter vector",
            });
        }
        let interval = self.fam.interval();
        let mut total = 0.0;
        for i in 0..self.data.len() {
            let tp = self.model.eval_unchecked(eta_p, self.data.w(i));
            if !interval.contains(tp) {
                return Err(Error::DomainAtIndex {
                    index: i,
                    value: tp,
                    domain: interval.to_string(),
                });
            }
            let ap = self.fam.log_partition(tp);
            total += term(self.s[i], self.theta[i], self.a[i], tp, ap);
        }
        Ok(total)
    }

    /// Objective form for the optimizer: NaN when η′ leaves the model.
    pub fn eval_or_nan(&self, eta_p: &[f64]) -> f64 {
        self.eval(eta_p).unwrap_or(f64::NAN)
    }

    /// Contribution of a subset of rows, as a function of a single cell
    /// value (piecewise-constant models only).
    fn eval_cell(&self, rows: &[usize], value: f64) -> f64 {
        let tp = match &self.model.parametrization {
            Some(p) => p.u(value),
            None => value,
        };
        if !self.fam.interval().contains(tp) {
            return f64::NAN;
        }
        let ap = self.fam.log_partition(tp);
        rows.iter()
            .map(|&i| term(self.s[i], self.theta[i], self.a[i], tp, ap))
            .sum()
    }
}

fn check_model_data(data: &Dataset, model: &RegressionModel, eta: &[f64]) -> Result<()> {
    if data.dim() != model.covariate_dim {
        return Err(Error::DimensionMismatch {
            expected: model.covariate_dim,
            got: data.dim(),
            context: "dataset covariate dimension",
        });
    }
    if eta.len() != model.dim_p {
        return Err(Error::DimensionMismatch {
            expected: model.dim_p,
            got: eta.len(),
            context: "parameter vector",
        });
    }
    if model.kind == ModelKind::PiecewiseConstant {
        if let Some(i) = (0..data.len()).find(|&i| !(0.0..=1.0).contains(&data.w(i)[0])) {
            return Err(Error::DomainAtIndex {
                index: i,
                value: data.w(i)[0],
                domain: "[0, 1]".into(),
            });
        }
    }
    Ok(())
}

/// T(X, η, η′).
pub fn t_statistic(
    data: &Dataset,
    fam: &NaturalExpFamily,
    model: &RegressionModel,
    eta: &[f64],
    eta_p: &[f64],
) -> Result<f64> {
    TStatistic::new(data, fam, model, eta)?.eval(eta_p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoConfig {
    pub kappa: f64,
    /// Stop as soon as υ falls to this level.
    pub early_stop: f64,
    /// Iteration cap `L`.
    pub max_iters: usize,
    pub sup_search: OptimizerSettings,
    pub seed: u64,
}

impl Default for RhoConfig {
    fn default() -> Self {
        RhoConfig {
            kappa: KAPPA,
            early_stop: 1.0,
            max_iters: 100,
            sup_search: OptimizerSettings::default(),
            seed: 0,
        }
    }
}

impl RhoConfig {
    pub fn certificate_level(&self) -> f64 {
        self.kappa / 25.0
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.certificate_level();
        if !(k > 18.0 && k < 18.8) {
            return Err(Error::InvalidConfig(format!("kappa/25 = {k} outside (18, 18.8)")));
        }
        if !(self.early_stop >= 0.0 && self.early_stop <= k) {
            return Err(Error::InvalidConfig(format!(
                "early_stop {} must lie in [0, kappa/25]",
                self.early_stop
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpsilonResult {
    pub value: f64,
    pub argmax_eta: Vec<f64>,
    pub evaluations: usize,
    pub budget_exceeded: bool,
}

/// Approximates `υ(X, η) = sup_{η′} T(X, η, η′)` by CMA-ES over the
/// model's search box. The probe set always contains η′ = η, hence the
/// value is nonnegative. `restart_from` is the alternative start used by
/// the second and later optimizer runs.
pub fn upsilon(
    data: &Dataset,
    fam: &NaturalExpFamily,
    model: &RegressionModel,
    eta: &[f64],
    restart_from: Option<&[f64]>,
    settings: &OptimizerSettings,
    rng: &mut ChaCha8Rng,
) -> Result<UpsilonResult> {
    let t = TStatistic::new(data, fam, model, eta)?;
    let boxed = &model.search_box;
    // Degenerate box: the sup is over a singleton.
    if boxed.lower == boxed.upper {
        return Ok(UpsilonResult {
            value: 0.0,
            argmax_eta: eta.to_vec(),
            evaluations: 0,
            budget_exceeded: false,
        });
    }
    let eta_in = boxed.clipped(eta);
    let alt = restart_from
        .filter(|r| r.len() == eta.len())
        .map(|r| boxed.clipped(r))
        .unwrap_or_else(|| eta_in.clone());

    if model.kind == ModelKind::PiecewiseConstant {
        return upsilon_separable(&t, model, eta, &alt, settings, rng);
    }

    let out = cmaes_maximize_multi(
        |x| t.eval_or_nan(x),
        &[&eta_in, &alt],
        boxed,
        settings,
        rng,
    )?;
    // η itself might sit outside the box; T(η, η) = 0 is always a probe.
    let (value, argmax) = if out.f >= 0.0 {
        (out.f, out.x)
    } else {
        (0.0, eta.to_vec())
    };
    Ok(UpsilonResult {
        value,
        argmax_eta: argmax,
        evaluations: out.evaluations,
        budget_exceeded: out.budget_exceeded,
    })
}

/// Cells of a piecewise-constant model interact with disjoint rows, so the
/// supremum splits into one-dimensional problems.
fn upsilon_separable(
    t: &TStatistic<'_>,
    model: &RegressionModel,
    eta: &[f64],
    alt: &[f64],
    settings: &OptimizerSettings,
    rng: &mut ChaCha8Rng,
) -> Result<UpsilonResult> {
    let d = model.dim_p;
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); d];
    for i in 0..t.data.len() {
        rows[model.cell_of(t.data.w(i)[0])].push(i);
    }
    let mut value = 0.0;
    let mut argmax = eta.to_vec();
    let mut evaluations = 0;
    let mut budget_exceeded = false;
    for j in 0..d {
        if rows[j].is_empty() {
            continue;
        }
        let b = SearchBox {
            lower: vec![model.search_box.lower[j]],
            upper: vec![model.search_box.upper[j]],
        };
        let start = [eta[j].clamp(b.lower[0], b.upper[0])];
        let other = [alt[j]];
        let out = cmaes_maximize_multi(
            |x| t.eval_cell(&rows[j], x[0]),
            &[&start, &other],
            &b,
            settings,
            rng,
        )?;
        evaluations += out.evaluations;
        budget_exceeded |= out.budget_exceeded;
        if out.f > 0.0 {
            value += out.f;
            argmax[j] = out.x[0];
        }
    }
    Ok(UpsilonResult {
        value,
        argmax_eta: argmax,
        evaluations,
        budget_exceeded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub eta: Vec<f64>,
    pub upsilon: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoFitResult {
    pub eta_hat: Vec<f64>,
    /// Approximate υ(X, η̂) at the returned point.
    pub upsilon_hat: f64,
    pub iterations: usize,
    /// `upsilon_hat ≤ κ/25`.
    pub certificate: bool,
    /// Iterate with the smallest υ seen along the way.
    pub best_eta: Vec<f64>,
    pub best_upsilon: f64,
    pub budget_exceeded: bool,
    pub trace: Vec<TraceEntry>,
}

/// Iterative search for a ρ-estimator.
///
/// Starting from `eta0`, repeat while `υ(X, η̂) > early_stop` and fewer
/// than `L` moves have been made: move η̂ to the maximizer of
/// `η′ ↦ T(X, η̂, η′)`. Each pass performs one maximization that yields both
/// υ at the current point and the next iterate.
pub fn rho_estimate(
    data: &Dataset,
    fam: &NaturalExpFamily,
    model: &RegressionModel,
    eta0: &[f64],
    cfg: &RhoConfig,
) -> Result<RhoFitResult> {
    cfg.validate()?;
    if eta0.len() != model.dim_p {
        return Err(Error::DimensionMismatch {
            expected: model.dim_p,
            got: eta0.len(),
            context: "starting point",
        });
    }
    if !model.search_box.contains(eta0) {
        return Err(Error::Precondition(format!(
            "starting point {eta0:?} lies outside the search box"
        )));
    }
    let mut eta_hat = eta0.to_vec();
    let mut l = 0usize;
    let mut trace = Vec::new();
    let mut budget_exceeded = false;
    let (mut best_eta, mut best_ups) = (eta_hat.clone(), f64::INFINITY);
    loop {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            cfg.seed,
            "rho-iteration",
            (cfg.sup_search.stream << 20) ^ l as u64,
        ));
        let ups = upsilon(
            data,
            fam,
            model,
            &eta_hat,
            Some(eta0),
            &cfg.sup_search,
            &mut rng,
        )?;
        budget_exceeded |= ups.budget_exceeded;
        trace.push(TraceEntry {
            iteration: l,
            eta: eta_hat.clone(),
            upsilon: ups.value,
            evaluations: ups.evaluations,
        });
        if ups.value < best_ups {
            best_ups = ups.value;
            best_eta = eta_hat.clone();
        }
        if !(ups.value > cfg.early_stop && l < cfg.max_iters) {
            let certificate = ups.value <= cfg.certificate_level();
            return Ok(RhoFitResult {
                eta_hat,
                upsilon_hat: ups.value,
                iterations: l,
                certificate,
                best_eta,
                best_upsilon: best_ups,
                budget_exceeded,
                trace,
            });
        }
        l += 1;
        eta_hat = ups.argmax_eta;
    }
}

/// Deviation bound `c₂V[9.11 + log₊(n/V)] + c₃(1.5 + ξ)` holding with
/// probability at least `1 − e^{−ξ}` when the model is exact. The `c₁`
/// approximation term is left to callers who know the model bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalBound {
    pub v: usize,
    pub n: usize,
    pub xi: f64,
}

impl TheoreticalBound {
    pub const C1: f64 = 150.0;
    pub const C2: f64 = 1.1e6;
    pub const C3: f64 = 5014.0;

    pub fn value(&self) -> Result<f64> {
        if self.v == 0 || self.n == 0 || !(self.xi > 0.0) {
            return Err(Error::Precondition("bound needs V >= 1, n >= 1, xi > 0".into()));
        }
        let log_plus = (self.n as f64 / self.v as f64).ln().max(0.0);
        Ok(Self::C2 * self.v as f64 * (9.11 + log_plus) + Self::C3 * (1.5 + self.xi))
    }

    /// Bound including the approximation term `c₁·h²(Q*, model)`.
    pub fn value_with_bias(&self, approx_h2: f64) -> Result<f64> {
        Ok(Self::C1 * approx_h2 + self.value()?)
    }
}

pub fn theoretical_bound(tb: &TheoreticalBound) -> Result<f64> {
    tb.value()
}
