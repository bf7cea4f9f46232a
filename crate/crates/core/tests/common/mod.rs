//! Oracles and property checks shared by the integration tests and the
//! acceptance harness. Each check returns a short description of the first
//! violation it finds.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rhoreg::baselines::{log_likelihood, log_likelihood_derivs, OptimizerSettings};
use rhoreg::rho::{psi, t_statistic};
use rhoreg::simlab::{
    hellinger_mixture_sq, risk_mc, Contaminant, Estimator, McConfig, Scenario,
};
use rhoreg::{upsilon, Dataset, NaturalExpFamily, RegressionModel, RowFlag};

pub type Check = std::result::Result<(), String>;

fn log_factorial(k: u64) -> f64 {
    (1..=k).map(|j| (j as f64).ln()).sum()
}

/// Composite Simpson rule with `m` (even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for k in 1..m {
        let x = a + k as f64 * h;
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

/// `½ Σ (√p − √q)²` or `½ ∫ (√p − √q)²` from the densities themselves.
pub fn hellinger_brute_force(fam: &NaturalExpFamily, t: f64, tp: f64) -> f64 {
    match *fam {
        NaturalExpFamily::Bernoulli => {
            let p = 1.0 / (1.0 + (-t).exp());
            let q = 1.0 / (1.0 + (-tp).exp());
            0.5 * ((p.sqrt() - q.sqrt()).powi(2) + ((1.0 - p).sqrt() - (1.0 - q).sqrt()).powi(2))
        }
        NaturalExpFamily::Poisson => {
            let (l, lp) = (t.exp(), tp.exp());
            let top = (l.max(lp) * 4.0 + 200.0) as u64;
            let mut s = 0.0;
            for k in 0..=top {
                let lf = log_factorial(k);
                let p = (k as f64 * t - l - lf).exp();
                let q = (k as f64 * tp - lp - lf).exp();
                s += (p.sqrt() - q.sqrt()).powi(2);
            }
            0.5 * s
        }
        NaturalExpFamily::Exponential => {
            let upper = 80.0 / t.min(tp);
            let f = |y: f64| {
                let p = t * (-t * y).exp();
                let q = tp * (-tp * y).exp();
                (p.sqrt() - q.sqrt()).powi(2)
            };
            // the integrand varies on the scale 1/max(θ, θ′) near zero
            let knee = 10.0 / t.max(tp);
            0.5 * (simpson(f, 0.0, knee, 20_000) + simpson(f, knee, upper.max(knee), 200_000))
        }
        NaturalExpFamily::GaussianFixedSigma { sigma } => {
            let c = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
            let f = |y: f64| {
                let p = c * (-(y - t).powi(2) / (2.0 * sigma * sigma)).exp();
                let q = c * (-(y - tp).powi(2) / (2.0 * sigma * sigma)).exp();
                (p.sqrt() - q.sqrt()).powi(2)
            };
            let lo = t.min(tp) - 14.0 * sigma;
            let hi = t.max(tp) + 14.0 * sigma;
            0.5 * simpson(f, lo, hi, 200_000)
        }
    }
}

fn random_theta(fam: &NaturalExpFamily, rng: &mut ChaCha8Rng) -> f64 {
    match fam {
        NaturalExpFamily::Bernoulli => rng.random_range(-6.0..6.0),
        NaturalExpFamily::Poisson => rng.random_range(-3.0..4.0),
        NaturalExpFamily::Exponential => rng.random_range(0.05..5.0),
        NaturalExpFamily::GaussianFixedSigma { .. } => rng.random_range(-5.0..5.0),
    }
}

pub fn families() -> Vec<NaturalExpFamily> {
    vec![
        NaturalExpFamily::Bernoulli,
        NaturalExpFamily::Poisson,
        NaturalExpFamily::Exponential,
        NaturalExpFamily::gaussian(0.7).unwrap(),
    ]
}

/// Closed form against the brute-force oracle on `pairs` random pairs per
/// family.
pub fn check_hellinger_closed_form(pairs: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for fam in families() {
        for _ in 0..pairs {
            let (t, tp) = (random_theta(&fam, &mut rng), random_theta(&fam, &mut rng));
            let closed = fam.hellinger_sq(t, tp).map_err(|e| e.to_string())?;
            let brute = hellinger_brute_force(&fam, t, tp);
            if (closed - brute).abs() > 1e-6 {
                return Err(format!(
                    "{}: h²({t}, {tp}) closed {closed} vs oracle {brute}",
                    fam.id()
                ));
            }
        }
    }
    Ok(())
}

pub fn check_psi_identities() -> Check {
    let near = |a: f64, b: f64| (a - b).abs() <= 1e-15;
    if psi(1.0).unwrap() != 0.0 || psi(0.0).unwrap() != -1.0 || psi(f64::INFINITY).unwrap() != 1.0
    {
        return Err("psi endpoints".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let x: f64 = rng.random_range(1e-6..1e6);
        let (a, b) = (psi(x).unwrap(), psi(1.0 / x).unwrap());
        if !near(a, -b) {
            return Err(format!("psi(1/x) != -psi(x) at x = {x}: {a} vs {b}"));
        }
    }
    Ok(())
}

/// A random instance: data, a family and its link model, two parameters.
pub struct Instance {
    pub data: Dataset,
    pub fam: NaturalExpFamily,
    pub model: RegressionModel,
    pub eta: Vec<f64>,
    pub eta_p: Vec<f64>,
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let which = rng.random_range(0..3);
    let d = rng.random_range(1..4);
    let n = rng.random_range(5..60);
    let (fam, model) = match which {
        0 => (NaturalExpFamily::Bernoulli, RegressionModel::linear(d)),
        1 => (NaturalExpFamily::Poisson, RegressionModel::loglog1pexp(d)),
        _ => (NaturalExpFamily::Exponential, RegressionModel::log1pexp(d)),
    };
    let eta_gen = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..=d).map(|_| rng.random_range(-2.0..2.0)).collect()
    };
    let eta = eta_gen(rng);
    let eta_p = eta_gen(rng);
    let mut data = Dataset::new(d);
    for _ in 0..n {
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let th = model.eval_theta(&eta, &w).unwrap();
        let mut y = fam.sample(th, rng).unwrap();
        if rng.random_bool(0.1) {
            // an occasional gross value off the model
            y = match which {
                0 => 1.0 - y,
                _ => y * 50.0 + 30.0,
            };
        }
        data.push(&w, y, RowFlag::Clean).unwrap();
    }
    Instance {
        data,
        fam,
        model,
        eta,
        eta_p,
    }
}

pub fn check_t_properties(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..instances {
        let inst = random_instance(&mut rng);
        let t = |a: &[f64], b: &[f64]| {
            t_statistic(&inst.data, &inst.fam, &inst.model, a, b).map_err(|e| e.to_string())
        };
        let ab = t(&inst.eta, &inst.eta_p)?;
        let ba = t(&inst.eta_p, &inst.eta)?;
        let n = inst.data.len() as f64;
        if (ab + ba).abs() > 1e-9 * n.max(1.0) {
            return Err(format!("T(a,b) = {ab} but T(b,a) = {ba}"));
        }
        if ab.abs() > n {
            return Err(format!("|T| = {} exceeds n = {n}", ab.abs()));
        }
        if t(&inst.eta, &inst.eta)? != 0.0 {
            return Err("T(a,a) != 0".into());
        }
    }
    Ok(())
}

pub fn check_upsilon_nonnegative(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let settings = OptimizerSettings {
        max_evals: 600,
        restarts: 1,
        ..OptimizerSettings::default()
    };
    for _ in 0..instances {
        let inst = random_instance(&mut rng);
        let u = upsilon(
            &inst.data,
            &inst.fam,
            &inst.model,
            &inst.eta,
            None,
            &settings,
            &mut rng,
        )
        .map_err(|e| e.to_string())?;
        if !(u.value >= 0.0) {
            return Err(format!("υ = {} < 0", u.value));
        }
        // the sup dominates any probe
        let probe = t_statistic(&inst.data, &inst.fam, &inst.model, &inst.eta, &inst.eta_p)
            .map_err(|e| e.to_string())?;
        if probe > u.value + 0.5 {
            return Err(format!("υ = {} well below a probe value {probe}", u.value));
        }
    }
    Ok(())
}

/// Analytic gradient against central differences with step 1e−5.
pub fn check_mle_gradient(draws: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..draws {
        let inst = random_instance(&mut rng);
        let (_, grad, _) = log_likelihood_derivs(&inst.data, &inst.fam, &inst.model, &inst.eta)
            .map_err(|e| e.to_string())?;
        let h = 1e-5;
        for j in 0..inst.eta.len() {
            let mut up = inst.eta.clone();
            let mut dn = inst.eta.clone();
            up[j] += h;
            dn[j] -= h;
            let f = |e: &[f64]| log_likelihood(&inst.data, &inst.fam, &inst.model, e).unwrap();
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            let scale = grad[j].abs().max(1.0);
            if (fd - grad[j]).abs() > 1e-4 * scale {
                return Err(format!(
                    "{}: ∂/∂η{j} analytic {} vs finite difference {fd}",
                    inst.fam.id(),
                    grad[j]
                ));
            }
        }
    }
    Ok(())
}

/// `h²(mixture, Q_θ̂) − h²(Q_θ*, Q_θ̂)` is bounded by the rate, and
/// `h²(mixture, Q_θ*) ≤ rate`.
pub fn check_mixture_bound(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..instances {
        let rate: f64 = rng.random_range(0.0..0.3);
        let (fam, contaminant) = match k % 2 {
            0 => (
                NaturalExpFamily::Poisson,
                Contaminant::ShiftedBernoulli {
                    base: rng.random_range(0.0..100.0f64).round(),
                    coef: vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                },
            ),
            _ => {
                let lo = rng.random_range(0.0..40.0);
                (
                    NaturalExpFamily::Exponential,
                    Contaminant::Uniform {
                        lo,
                        hi: lo + rng.random_range(0.1..20.0),
                    },
                )
            }
        };
        let w = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let ts = random_theta(&fam, &mut rng);
        let at = contaminant.at(&w);
        let h = hellinger_mixture_sq(&fam, ts, ts, &at, rate).map_err(|e| e.to_string())?;
        if !(h <= rate + 1e-12) {
            return Err(format!("{}: h²(mixture, Q*) = {h} > rate {rate}", fam.id()));
        }
    }
    Ok(())
}

/// Two runs of the Monte-Carlo driver with the same seed agree exactly.
pub fn check_replay() -> Check {
    let mut s = Scenario::builtin("poisson_ws").map_err(|e| e.to_string())?;
    s.n = 60;
    let mut cfg = McConfig::for_scenario(&s, 11);
    cfg.replications = 3;
    cfg.quadrature_n = 200;
    cfg.rho.sup_search.max_evals = 400;
    cfg.median.max_evals = 400;
    let strip = |mut r: rhoreg::simlab::RiskReport| {
        r.mean_seconds = 0.0;
        for o in r.per_replication.iter_mut() {
            o.seconds = 0.0;
        }
        r
    };
    let a = strip(risk_mc(&s, Estimator::Rho, &cfg).map_err(|e| e.to_string())?);
    let b = strip(risk_mc(&s, Estimator::Rho, &cfg).map_err(|e| e.to_string())?);
    if a != b {
        return Err("risk_mc differs between two runs with one seed".into());
    }
    cfg.seed = 12;
    let c = strip(risk_mc(&s, Estimator::Rho, &cfg).map_err(|e| e.to_string())?);
    if c.per_replication == a.per_replication {
        return Err("a different master seed reproduced the same replications".into());
    }
    Ok(())
}
