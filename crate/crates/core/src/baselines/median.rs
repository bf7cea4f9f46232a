//! Median-based estimator: minimizes `Σᵢ |yᵢ − m(θ_η(wᵢ))|`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cmaes::{cmaes_maximize, OptimizerSettings};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::expfam::NaturalExpFamily;
use crate::models::{ModelKind, RegressionModel};
use crate::numeric::softplus_inv;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianResult {
    pub eta: Vec<f64>,
    pub criterion: f64,
    pub warm_start: Vec<f64>,
    pub warm_start_criterion: f64,
    pub evaluations: usize,
}

fn supported(fam: &NaturalExpFamily) -> Result<()> {
    match fam {
        NaturalExpFamily::Poisson | NaturalExpFamily::Exponential => Ok(()),
        other => Err(Error::Unsupported(format!(
            "no median-based estimator for the {} family",
            other.id()
        ))),
    }
}

/// `Σᵢ |yᵢ − m(θ_η(wᵢ))|`; `+∞` when some θ leaves the natural interval.
pub fn median_criterion(
    data: &Dataset,
    fam: &NaturalExpFamily,
    model: &RegressionModel,
    eta: &[f64],
) -> Result<f64> {
    supported(fam)?;
    if eta.len() != model.dim_p {
        return Err(Error::DimensionMismatch {
            expected: model.dim_p,
            got: eta.len(),
            context: "parameter vector",
        });
    }
    if data.dim() != model.covariate_dim {
        return Err(Error::DimensionMismatch {
            expected: model.covariate_dim,
            got: data.dim(),
            context: "dataset covariate dimension",
        });
    }
    Ok(criterion_unchecked(data, fam, model, eta))
}

fn criterion_unchecked(
    data: &Dataset,
    fam: &NaturalExpFamily,
    model: &RegressionModel,
    eta: &[f64],
) -> f64 {
    let interval = fam.interval();
    let mut s = 0.0;
    for i in 0..data.len() {
        let t = model.eval_unchecked(eta, data.w(i));
        if !interval.contains(t) {
            return f64::INFINITY;
        }
        s += (data.y(i) - fam.median_approx_unchecked(t)).abs();
    }
    s
}

/// Value of `z` with `g(z) = θ` for the model's link, when it exists.
fn link_inverse(kind: ModelKind, theta: f64) -> f64 {
    match kind {
        ModelKind::Linear => theta,
        ModelKind::Log1pexp => softplus_inv(theta.max(1e-12)),
        ModelKind::Loglog1pexp => softplus_inv(theta.exp().max(1e-12)),
        ModelKind::PiecewiseConstant => theta,
    }
}

/// Least-squares fit of crude per-row natural parameters, mapped through the
/// inverse link and clipped to the search box.
pub fn warm_start(data: &Dataset, fam: &NaturalExpFamily, model: &RegressionModel) -> Vec<f64> {
    let p = model.dim_p;
    let n = data.len();
    if n == 0 || model.kind == ModelKind::PiecewiseConstant {
        return model.search_box.clipped(&vec![0.0; p]);
    }
    let targets: Vec<f64> = data
        .ys()
        .iter()
        .map(|&y| {
            let theta = match fam {
                // log of a Poisson mean, shifted away from zero counts
                NaturalExpFamily::Poisson => (y.max(0.0) + 0.5).ln(),
                // E[log Y] = −log θ − γ for an exponential variable
                _ => (-(y.max(1e-3)).ln() - EULER_GAMMA).clamp(-7.0, 7.0).exp(),
            };
            link_inverse(model.kind, theta)
        })
        .collect();
    let mut x = DMatrix::<f64>::zeros(n, p);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        for (j, v) in data.w(i).iter().enumerate() {
            x[(i, j + 1)] = *v;
        }
    }
    let mut gram = x.transpose() * &x;
    for k in 0..p {
        gram[(k, k)] += 1e-8 * n as f64;
    }
    let rhs = x.transpose() * DVector::from_vec(targets);
    let sol = gram
        .cholesky()
        .map(|c| c.solve(&rhs))
        .unwrap_or_else(|| DVector::zeros(p));
    let mut eta: Vec<f64> = sol.iter().map(|v| if v.is_finite() { *v } else { 0.0 }).collect();
    model.search_box.clip(&mut eta);
    eta
}

/// Approximate minimizer of the median criterion over the search box.
pub fn median_estimate<R: Rng + ?Sized>(
    data: &Dataset,
    fam: &NaturalExpFamily,
    model: &RegressionModel,
    settings: &OptimizerSettings,
    rng: &mut R,
) -> Result<MedianResult> {
    supported(fam)?;
    let start = warm_start(data, fam, model);
    let start_crit = median_criterion(data, fam, model, &start)?;
    if !start_crit.is_finite() {
        return Err(Error::Numerical(
            "median criterion is not finite at the warm start".into(),
        ));
    }
    let out = cmaes_maximize(
        |e| -criterion_unchecked(data, fam, model, e),
        &start,
        &model.search_box,
        settings,
        rng,
    )?;
    Ok(MedianResult {
        criterion: -out.f,
        eta: out.x,
        warm_start: start,
        warm_start_criterion: start_crit,
        evaluations: out.evaluations,
    })
}
