//! Browser bindings. Every exported function returns a JSON string; errors
//! come back as `{"error": "..."}` so the page never has to catch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rhoreg::baselines::{median_estimate, mle, OptimizerSettings};
use rhoreg::numeric::derive_seed;
use rhoreg::simlab::{gen_well_specified, holder_target_mean, rho_start, Scenario};
use rhoreg::{rho_estimate, Dataset, NaturalExpFamily, RegressionModel, RhoConfig, RowFlag};
use serde::Serialize;
use wasm_bindgen::prelude::*;

type Out<T> = std::result::Result<T, String>;

fn to_json<T: Serialize>(r: Out<T>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e),
    }
}

fn error_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Small budgets keep each call interactive.
fn demo_settings() -> OptimizerSettings {
    OptimizerSettings {
        max_evals: 1500,
        ..OptimizerSettings::default()
    }
}

#[derive(Serialize)]
pub struct Curve {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// `θ′ ↦ h²(Q_θ, Q_θ′)` on `points` values of θ′ in `[lo, hi]`.
pub fn hellinger_curve_impl(family: &str, theta: f64, lo: f64, hi: f64, points: usize) -> Out<Curve> {
    let fam = NaturalExpFamily::from_id(family).map_err(err)?;
    fam.check("theta", theta).map_err(err)?;
    if !(lo < hi) || points < 2 || points > 10_000 {
        return Err("need lo < hi and 2 <= points <= 10000".into());
    }
    let mut x = Vec::with_capacity(points);
    let mut y = Vec::with_capacity(points);
    for k in 0..points {
        let t = lo + (hi - lo) * k as f64 / (points - 1) as f64;
        if let Ok(h) = fam.hellinger_sq(theta, t) {
            x.push(t);
            y.push(h);
        }
    }
    Ok(Curve { x, y })
}

#[wasm_bindgen]
pub fn hellinger_curve(family: &str, theta: f64, lo: f64, hi: f64, points: usize) -> String {
    to_json(hellinger_curve_impl(family, theta, lo, hi, points))
}

#[derive(Serialize)]
pub struct OutlierFit {
    pub w: Vec<f64>,
    pub y: Vec<f64>,
    pub outlier: [f64; 2],
    pub grid: Vec<f64>,
    /// Mean of `Y` given `w` on the grid.
    pub truth: Vec<f64>,
    pub rho: Vec<f64>,
    pub mle: Option<Vec<f64>>,
    pub rho_iterations: usize,
    pub rho_upsilon: f64,
}

/// One-covariate Poisson or exponential regression with a single planted
/// outlier at `(outlier_w, outlier_y)`; fits the ρ-estimator and the MLE.
pub fn outlier_fit_impl(
    family: &str,
    n: usize,
    seed: u64,
    outlier_w: f64,
    outlier_y: f64,
) -> Out<OutlierFit> {
    let fam = NaturalExpFamily::from_id(family).map_err(err)?;
    let (model, eta_star) = match fam {
        NaturalExpFamily::Poisson => (RegressionModel::loglog1pexp(1), [0.5, 3.0]),
        NaturalExpFamily::Exponential => (RegressionModel::log1pexp(1), [0.2, 2.0]),
        _ => return Err("choose poisson or exponential".into()),
    };
    if !(10..=2000).contains(&n) {
        return Err("n must lie in [10, 2000]".into());
    }
    if !outlier_y.is_finite() || outlier_y < 0.0 {
        return Err("the outlier must be a nonnegative number".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Dataset::new(1);
    for _ in 0..n {
        let w = rng.random::<f64>();
        let t = model.eval_theta(&eta_star, &[w]).map_err(err)?;
        let y = fam.sample(t, &mut rng).map_err(err)?;
        data.push(&[w], y, RowFlag::Clean).map_err(err)?;
    }
    data.push(&[outlier_w], outlier_y, RowFlag::Outlier)
        .map_err(err)?;

    let mut mrng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "median", 0));
    let med = median_estimate(&data, &fam, &model, &demo_settings(), &mut mrng).map_err(err)?;
    let eta0 = rho_start(&data, &fam, &model, Some(&med.eta)).map_err(err)?;
    let cfg = RhoConfig {
        max_iters: 20,
        sup_search: demo_settings(),
        seed: derive_seed(seed, "rho", 0),
        ..RhoConfig::default()
    };
    let fit = rho_estimate(&data, &fam, &model, &eta0, &cfg).map_err(err)?;
    let ml = mle(&data, &fam, &model).map_err(err)?;

    let grid: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
    let mean_curve = |eta: &[f64]| -> Vec<f64> {
        grid.iter()
            .map(|w| {
                model
                    .eval_theta(eta, &[*w])
                    .map(|t| fam.mean(t))
                    .unwrap_or(f64::NAN)
            })
            .collect()
    };
    Ok(OutlierFit {
        w: data.rows().map(|(w, _, _)| w[0]).collect(),
        y: data.ys().to_vec(),
        outlier: [outlier_w, outlier_y],
        truth: mean_curve(&eta_star),
        rho: mean_curve(&fit.eta_hat),
        mle: ml.eta_hat.as_deref().map(mean_curve),
        grid,
        rho_iterations: fit.iterations,
        rho_upsilon: fit.upsilon_hat,
    })
}

#[wasm_bindgen]
pub fn outlier_fit(family: &str, n: usize, seed: u64, outlier_w: f64, outlier_y: f64) -> String {
    to_json(outlier_fit_impl(family, n, seed, outlier_w, outlier_y))
}

#[derive(Serialize)]
pub struct HolderDemo {
    pub w: Vec<f64>,
    pub y: Vec<f64>,
    pub grid: Vec<f64>,
    pub target: Vec<f64>,
    /// Fitted Poisson mean on each of the equal-width cells of `[0, 1]`.
    pub cells: Vec<f64>,
    pub iterations: usize,
}

/// Piecewise-constant ρ-fit of a Poisson mean with Hölder smoothness
/// `alpha` and radius `m`.
pub fn holder_fit_impl(alpha: f64, m: f64, n: usize, seed: u64) -> Out<HolderDemo> {
    if !(10..=5000).contains(&n) {
        return Err("n must lie in [10, 5000]".into());
    }
    let s = Scenario::holder(alpha, m, n).map_err(err)?;
    let data = gen_well_specified(&s, seed).map_err(err)?;
    let eta0 = rho_start(&data, &s.family, &s.model, None).map_err(err)?;
    let cfg = RhoConfig {
        max_iters: 20,
        sup_search: demo_settings(),
        seed: derive_seed(seed, "rho", 0),
        ..RhoConfig::default()
    };
    let fit = rho_estimate(&data, &s.family, &s.model, &eta0, &cfg).map_err(err)?;
    let grid: Vec<f64> = (0..=400).map(|k| k as f64 / 400.0).collect();
    Ok(HolderDemo {
        w: data.rows().map(|(w, _, _)| w[0]).collect(),
        y: data.ys().to_vec(),
        target: grid.iter().map(|w| holder_target_mean(alpha, m, *w)).collect(),
        grid,
        cells: fit.eta_hat,
        iterations: fit.iterations,
    })
}

#[wasm_bindgen]
pub fn holder_fit(alpha: f64, m: f64, n: usize, seed: u64) -> String {
    to_json(holder_fit_impl(alpha, m, n, seed))
}
