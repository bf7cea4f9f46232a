//! Maximum likelihood for the link models by damped Newton iterations.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::expfam::NaturalExpFamily;
use crate::models::{ModelKind, RegressionModel};

/// ‖η‖ beyond which a still-increasing likelihood is declared unbounded.
pub const DIVERGENCE_NORM: f64 = 1e3;
const MAX_NEWTON_ITERS: usize = 2000;
const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    /// `None` when the maximizer does not exist (or was not reached).
    pub eta_hat: Option<Vec<f64>>,
    pub nonexistence: bool,
    /// Final Newton iterate, also reported when `eta_hat` is `None`.
    pub last_eta: Vec<f64>,
    pub log_lik: f64,
    pub gradient_norm: f64,
    pub newton_iters: usize,
    /// Log-likelihood after every accepted step.
    pub log_lik_trace: Vec<f64>,
}

fn check(data: &Dataset, model: &RegressionModel, eta: &[f64]) -> Result<()> {
    if model.kind == ModelKind::PiecewiseConstant {
        return Err(Error::Unsupported(
            "maximum likelihood is implemented for the link models only".into(),
        ));
    }
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
    Ok(())
}

/// Conditional log-likelihood `Σᵢ S(yᵢ)θ_η(wᵢ) − A(θ_η(wᵢ))` (relative to
/// the base measure).
pub fn log_likelihood(
    data: &Dataset,
    fam: &NaturalExpFamily,
    model: &RegressionModel,
    eta: &[f64],
) -> Result<f64> {
    check(data, model, eta)?;
    Ok(ll_unchecked(data, fam, model, eta))
}

fn ll_unchecked(
    data: &Dataset,
    fam: &NaturalExpFamily,
    model: &RegressionModel,
    eta: &[f64],
) -> f64 {
    let mut ll = 0.0;
    for i in 0..data.len() {
        let t = model.eval_unchecked(eta, data.w(i));
        ll += fam.suff_stat(data.y(i)) * t - fam.log_partition(t);
    }
    ll
}

/// Log-likelihood with its gradient and Hessian in η.
pub fn log_likelihood_derivs(
    data: &Dataset,
    fam: &NaturalExpFamily,
    model: &RegressionModel,
    eta: &[f64],
) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    check(data, model, eta)?;
    let p = model.dim_p;
    let mut ll = 0.0;
    let mut grad = DVector::<f64>::zeros(p);
    let mut hess = DMatrix::<f64>::zeros(p, p);
    let mut x = DVector::<f64>::zeros(p);
    for i in 0..data.len() {
        let w = data.w(i);
        let z = RegressionModel::linear_predictor(eta, w);
        let (t, d1, d2) = model.link_derivs(z);
        let s = fam.suff_stat(data.y(i));
        ll += s * t - fam.log_partition(t);
        let resid = s - fam.d_log_partition(t);
        let dz = resid * d1;
        let dzz = -fam.d2_log_partition(t) * d1 * d1 + resid * d2;
        x[0] = 1.0;
        x.as_mut_slice()[1..].copy_from_slice(w);
        grad.axpy(dz, &x, 1.0);
        hess.ger(dzz, &x, &x, 1.0);
    }
    Ok((ll, grad, hess))
}

/// Damped Newton ascent with backtracking line search.
///
/// Converged when ‖∇‖ ≤ 1e−8·n. Declares nonexistence when ‖η‖ exceeds
/// [`DIVERGENCE_NORM`] while the likelihood is still increasing, the
/// behaviour of separable logistic data.
pub fn mle(data: &Dataset, fam: &NaturalExpFamily, model: &RegressionModel) -> Result<MleResult> {
    let p = model.dim_p;
    let mut eta = vec![0.0; p];
    check(data, model, &eta)?;
    if fam == &NaturalExpFamily::Exponential && model.kind != ModelKind::Log1pexp {
        // θ must stay positive along the path; start from a feasible constant.
        if model.kind == ModelKind::Linear {
            let mean_y = data.ys().iter().sum::<f64>() / data.len().max(1) as f64;
            eta[0] = 1.0 / mean_y.max(1e-6);
        }
    }
    let tol = 1e-8 * data.len().max(1) as f64;
    let mut trace = Vec::new();
    let (mut ll, mut grad, mut hess) = log_likelihood_derivs(data, fam, model, &eta)?;
    trace.push(ll);
    let mut iters = 0;
    loop {
        let gnorm = grad.norm();
        if gnorm <= tol {
            if let Some(far) = unbounded_along_ray(data, fam, model, &eta, ll) {
                return Ok(MleResult {
                    eta_hat: None,
                    nonexistence: true,
                    last_eta: far,
                    log_lik: ll,
                    gradient_norm: gnorm,
                    newton_iters: iters,
                    log_lik_trace: trace,
                });
            }
            return Ok(MleResult {
                eta_hat: Some(eta.clone()),
                nonexistence: false,
                last_eta: eta,
                log_lik: ll,
                gradient_norm: gnorm,
                newton_iters: iters,
                log_lik_trace: trace,
            });
        }
        let eta_norm = eta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if eta_norm > DIVERGENCE_NORM || iters >= MAX_NEWTON_ITERS {
            return Ok(MleResult {
                eta_hat: None,
                nonexistence: eta_norm > DIVERGENCE_NORM,
                last_eta: eta,
                log_lik: ll,
                gradient_norm: gnorm,
                newton_iters: iters,
                log_lik_trace: trace,
            });
        }
        iters += 1;
        let dir = newton_direction(&hess, &grad);
        let slope = grad.dot(&dir);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = eta
                .iter()
                .zip(dir.iter())
                .map(|(e, d)| e + step * d)
                .collect();
            let c_ll = ll_unchecked(data, fam, model, &cand);
            if c_ll.is_finite() && c_ll >= ll + 1e-4 * step * slope {
                accepted = Some((cand, c_ll));
                break;
            }
            // In the quadratic regime the predicted gain is below the
            // rounding noise of the likelihood sum; take the full step.
            if step == 1.0 && 0.5 * slope <= 1e-12 * ll.abs().max(1.0) && c_ll.is_finite() {
                accepted = Some((cand, c_ll));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, c_ll)) = accepted else {
            return Err(Error::Numerical(format!(
                "line search failed at iteration {iters} (gradient norm {gnorm:e})"
            )));
        };
        eta = cand;
        let (l2, g2, h2) = log_likelihood_derivs(data, fam, model, &eta)?;
        debug_assert!((l2 - c_ll).abs() <= 1e-9 * l2.abs().max(1.0));
        ll = l2;
        grad = g2;
        hess = h2;
        trace.push(ll);
    }
}

/// A vanishing gradient also occurs far along a ray on which the likelihood
/// increases to its supremum (separable logistic data). Doubling η until
/// its norm exceeds [`DIVERGENCE_NORM`] distinguishes the two: at a genuine
/// maximizer strict concavity makes the first doubling decrease the
/// likelihood. Returns the far point when the ray never decreases.
fn unbounded_along_ray(
    data: &Dataset,
    fam: &NaturalExpFamily,
    model: &RegressionModel,
    eta: &[f64],
    ll: f64,
) -> Option<Vec<f64>> {
    let norm = eta.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1.0 {
        return None;
    }
    let mut prev = ll;
    let mut point = eta.to_vec();
    while point.iter().map(|v| v * v).sum::<f64>().sqrt() <= DIVERGENCE_NORM {
        point.iter_mut().for_each(|v| *v *= 2.0);
        let next = ll_unchecked(data, fam, model, &point);
        if !(next >= prev) {
            return None;
        }
        prev = next;
    }
    Some(point)
}

/// Solves `(−H + λI) d = g`, growing λ until the system is positive definite.
fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    let p = grad.len();
    let neg = -hess;
    let mut lambda = RIDGE;
    loop {
        let mut m = neg.clone();
        for k in 0..p {
            m[(k, k)] += lambda;
        }
        if let Some(ch) = Cholesky::new(m) {
            let d = ch.solve(grad);
            if d.iter().all(|v| v.is_finite()) {
                return d;
            }
        }
        lambda *= 10.0;
        if lambda > 1e12 {
            return grad.clone();
        }
    }
}
