//! Box-constrained CMA-ES maximizer.
//!
//! A (μ/μ_w, λ) evolution strategy with cumulative step-size adaptation and
//! rank-one plus rank-μ covariance updates. Candidates leaving the box are
//! resampled a few times and then clipped. The incumbent starting point is
//! always part of the probe set, so the returned value never falls below
//! the objective at the start.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::SearchBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    /// Offspring per generation; `None` means `4 + ⌊3 ln p⌋`.
    pub population: Option<usize>,
    /// Initial step size as a fraction of the widest box side.
    pub sigma0_fraction: f64,
    /// Evaluation budget per start.
    pub max_evals: usize,
    /// Number of independent starts.
    pub restarts: usize,
    /// Stop a start once the best value moved less than this over the
    /// recent generations.
    pub tol_fun: f64,
    /// Stop a start once the sampling scale falls below this.
    pub tol_x: f64,
    /// Distinguishes the random streams of different optimizer uses.
    pub stream: u64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            population: None,
            sigma0_fraction: 0.3,
            max_evals: 5000,
            restarts: 2,
            tol_fun: 1e-10,
            tol_x: 1e-11,
            stream: 0,
        }
    }
}

impl OptimizerSettings {
    pub fn population_for(&self, dim: usize) -> usize {
        self.population
            .unwrap_or_else(|| 4 + (3.0 * (dim.max(1) as f64).ln()).floor() as usize)
    }

    pub fn sigma0_for(&self, b: &SearchBox) -> f64 {
        self.sigma0_fraction * b.max_width()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let pop = self.population_for(dim);
        if pop < 4 {
            return Err(Error::InvalidConfig(format!("population {pop} < 4")));
        }
        if self.max_evals < pop {
            return Err(Error::InvalidConfig(format!(
                "max_evals {} < population {pop}",
                self.max_evals
            )));
        }
        if !(self.sigma0_fraction > 0.0) {
            return Err(Error::InvalidConfig("sigma0_fraction must be positive".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmaesOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    /// Some start stopped on the evaluation budget rather than converging.
    pub budget_exceeded: bool,
}

/// Maximizes `objective` over `bounds` starting from `x0`.
///
/// NaN at `x0` is an error; NaN anywhere else counts as `−∞`.
pub fn cmaes_maximize<F, R>(
    objective: F,
    x0: &[f64],
    bounds: &SearchBox,
    settings: &OptimizerSettings,
    rng: &mut R,
) -> Result<CmaesOutcome>
where
    F: FnMut(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    cmaes_maximize_multi(objective, &[x0], bounds, settings, rng)
}

/// Like [`cmaes_maximize`] but runs `settings.restarts` starts, cycling
/// through `starts`. The first start is the incumbent.
pub fn cmaes_maximize_multi<F, R>(
    mut objective: F,
    starts: &[&[f64]],
    bounds: &SearchBox,
    settings: &OptimizerSettings,
    rng: &mut R,
) -> Result<CmaesOutcome>
where
    F: FnMut(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    let dim = bounds.dim();
    settings.validate(dim)?;
    if starts.is_empty() {
        return Err(Error::Precondition("no starting point".into()));
    }
    for s in starts {
        if s.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: s.len(),
                context: "optimizer start",
            });
        }
        if !bounds.contains(s) {
            return Err(Error::Precondition(format!("start {s:?} outside the search box")));
        }
    }
    let f0 = objective(starts[0]);
    if f0.is_nan() {
        return Err(Error::Numerical("objective is NaN at the starting point".into()));
    }
    let mut best = CmaesOutcome {
        x: starts[0].to_vec(),
        f: f0,
        evaluations: 1,
        budget_exceeded: false,
    };
    let sigma0 = settings.sigma0_for(bounds);
    for k in 0..settings.restarts {
        let start = starts[k % starts.len()];
        let run = run_once(&mut objective, start, sigma0, bounds, settings, rng);
        best.evaluations += run.evaluations;
        best.budget_exceeded |= run.budget_exceeded;
        if run.f > best.f {
            best.x = run.x;
            best.f = run.f;
        }
    }
    Ok(best)
}

struct RunResult {
    x: Vec<f64>,
    f: f64,
    evaluations: usize,
    budget_exceeded: bool,
}

fn run_once<F, R>(
    objective: &mut F,
    x0: &[f64],
    sigma0: f64,
    bounds: &SearchBox,
    settings: &OptimizerSettings,
    rng: &mut R,
) -> RunResult
where
    F: FnMut(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    let n = bounds.dim();
    let nf = n as f64;
    let lambda = settings.population_for(n);
    let mu = lambda / 2;
    let raw: Vec<f64> = (0..mu)
        .map(|i| (mu as f64 + 0.5).ln() - ((i + 1) as f64).ln())
        .collect();
    let wsum: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / wsum).collect();
    let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let cc = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
    let cs = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
    let c1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
    let cmu = (1.0 - c1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
    let damps = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + cs;
    let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

    let mut mean = DVector::from_column_slice(x0);
    let mut sigma = sigma0;
    let mut cov = DMatrix::<f64>::identity(n, n);
    let mut basis = DMatrix::<f64>::identity(n, n);
    let mut scales = DVector::<f64>::from_element(n, 1.0);
    let mut ps = DVector::<f64>::zeros(n);
    let mut pc = DVector::<f64>::zeros(n);

    let mut best_x = x0.to_vec();
    let mut best_f = f64::NEG_INFINITY;
    let mut evals = 0usize;
    let mut generation = 0usize;
    let history_len = 10 + (30.0 * nf / lambda as f64).ceil() as usize;
    let mut history: Vec<f64> = Vec::with_capacity(history_len);
    let mut budget_exceeded = false;

    let mut xs: Vec<DVector<f64>> = Vec::with_capacity(lambda);
    let mut fs: Vec<f64> = Vec::with_capacity(lambda);
    let mut cand = vec![0.0; n];

    loop {
        if evals + lambda > settings.max_evals {
            budget_exceeded = true;
            break;
        }
        xs.clear();
        fs.clear();
        for _ in 0..lambda {
            let mut x = DVector::<f64>::zeros(n);
            let mut inside = false;
            for _attempt in 0..8 {
                let z = DVector::<f64>::from_fn(n, |_, _| rng.sample(StandardNormal));
                let y = &basis * z.component_mul(&scales);
                x = &mean + sigma * y;
                if bounds.contains(x.as_slice()) {
                    inside = true;
                    break;
                }
            }
            if !inside {
                bounds.clip(x.as_mut_slice());
            }
            cand.copy_from_slice(x.as_slice());
            let mut f = objective(&cand);
            if f.is_nan() {
                f = f64::NEG_INFINITY;
            }
            evals += 1;
            if f > best_f {
                best_f = f;
                best_x.copy_from_slice(&cand);
            }
            xs.push(x);
            fs.push(f);
        }
        generation += 1;

        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&a, &b| fs[b].total_cmp(&fs[a]));

        let old_mean = mean.clone();
        mean.fill(0.0);
        for (w, &i) in weights.iter().zip(&order[..mu]) {
            mean.axpy(*w, &xs[i], 1.0);
        }
        let step = (&mean - &old_mean) / sigma;

        // C^{-1/2} · step
        let inv_sqrt_step = {
            let t = basis.transpose() * &step;
            let t = t.component_div(&scales);
            &basis * t
        };
        ps = (1.0 - cs) * &ps + (cs * (2.0 - cs) * mu_eff).sqrt() * inv_sqrt_step;
        let ps_norm = ps.norm();
        let hsig = ps_norm / (1.0 - (1.0 - cs).powi(2 * generation as i32)).sqrt() / chi_n
            < 1.4 + 2.0 / (nf + 1.0);
        let hs = if hsig { 1.0 } else { 0.0 };
        pc = (1.0 - cc) * &pc + hs * (cc * (2.0 - cc) * mu_eff).sqrt() * &step;

        let mut rank_mu = DMatrix::<f64>::zeros(n, n);
        for (w, &i) in weights.iter().zip(&order[..mu]) {
            let d = (&xs[i] - &old_mean) / sigma;
            rank_mu.ger(*w, &d, &d, 1.0);
        }
        cov = (1.0 - c1 - cmu) * &cov
            + c1 * (&pc * pc.transpose() + (1.0 - hs) * cc * (2.0 - cc) * &cov)
            + cmu * rank_mu;
        sigma *= ((cs / damps) * (ps_norm / chi_n - 1.0)).exp();

        // Symmetrize and refresh the eigendecomposition.
        let sym = 0.5 * (&cov + cov.transpose());
        let eig = SymmetricEigen::new(sym.clone());
        cov = sym;
        let min_ev = eig.eigenvalues.min();
        let max_ev = eig.eigenvalues.max();
        if !(min_ev > 0.0) || max_ev / min_ev > 1e14 || !sigma.is_finite() {
            break;
        }
        basis = eig.eigenvectors;
        scales = eig.eigenvalues.map(f64::sqrt);

        // Stopping rules.
        let gen_best = fs[order[0]];
        history.push(gen_best);
        if history.len() > history_len {
            history.remove(0);
        }
        if history.len() == history_len {
            let hmax = history.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let hmin = history.iter().cloned().fold(f64::INFINITY, f64::min);
            let gen_range = fs[order[0]] - fs[order[lambda - 1]];
            if hmax - hmin < settings.tol_fun && gen_range < settings.tol_fun {
                break;
            }
        }
        if sigma * scales.max() < settings.tol_x {
            break;
        }
    }
    RunResult {
        x: best_x,
        f: best_f,
        evaluations: evals,
        budget_exceeded,
    }
}
