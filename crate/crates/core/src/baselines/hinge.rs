//! Penalized hinge-loss initializer for logistic fits.

use crate::data::Dataset;
use crate::error::{Error, Result};

const HINGE_WEIGHT: f64 = 10.0;
const MAX_ITERS: usize = 50_000;
const PATIENCE: usize = 2_000;
const TOL: f64 = 1e-6;

/// Sign label in {−1, +1}: `y ≥ 1/2` maps to +1.
fn label(y: f64) -> f64 {
    if 2.0 * y - 1.0 >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// `10 Σᵢ (1 − sᵢ θ_η(wᵢ))₊ + ½‖η₁..‖²` for linear θ.
pub fn hinge_objective(data: &Dataset, eta: &[f64]) -> f64 {
    let mut h = 0.0;
    for (w, y, _) in data.rows() {
        let z = eta[0] + w.iter().zip(&eta[1..]).map(|(a, b)| a * b).sum::<f64>();
        h += (1.0 - label(y) * z).max(0.0);
    }
    HINGE_WEIGHT * h + 0.5 * eta[1..].iter().map(|v| v * v).sum::<f64>()
}

/// Subgradient descent on [`hinge_objective`] with diminishing normalized
/// steps, returning the best iterate. Stops when the best objective has not
/// improved by more than 1e−6 over a long window.
pub fn hinge_init(data: &Dataset) -> Result<Vec<f64>> {
    if data.ys().iter().any(|y| !y.is_finite()) {
        return Err(Error::Precondition("non-finite response".into()));
    }
    if data.ys().iter().any(|&y| !(y == 0.0 || y == 1.0 || y == -1.0)) {
        return Err(Error::Precondition(
            "hinge initializer expects binary responses".into(),
        ));
    }
    let p = data.dim() + 1;
    let mut eta = vec![0.0; p];
    let mut best = eta.clone();
    let mut best_f = hinge_objective(data, &eta);
    let mut last_improve_f = best_f;
    let mut last_improve_it = 0;
    let mut g = vec![0.0; p];
    for it in 0..MAX_ITERS {
        g.iter_mut().for_each(|v| *v = 0.0);
        for (w, y, _) in data.rows() {
            let s = label(y);
            let z = eta[0] + w.iter().zip(&eta[1..]).map(|(a, b)| a * b).sum::<f64>();
            if 1.0 - s * z > 0.0 {
                g[0] -= HINGE_WEIGHT * s;
                for (gj, wj) in g[1..].iter_mut().zip(w) {
                    *gj -= HINGE_WEIGHT * s * wj;
                }
            }
        }
        for j in 1..p {
            g[j] += eta[j];
        }
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn == 0.0 {
            break;
        }
        let step = 1.0 / (((it + 1) as f64).sqrt() * gn);
        for j in 0..p {
            eta[j] -= step * g[j];
        }
        let f = hinge_objective(data, &eta);
        if f < best_f {
            best_f = f;
            best.copy_from_slice(&eta);
        }
        if last_improve_f - best_f > TOL * last_improve_f.max(1.0) {
            last_improve_f = best_f;
            last_improve_it = it;
        } else if it - last_improve_it > PATIENCE {
            break;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RowFlag;

    #[test]
    fn never_worse_than_origin() {
        let mut ds = Dataset::new(2);
        ds.push(&[1.0, 0.5], 1.0, RowFlag::Clean).unwrap();
        ds.push(&[-1.0, 0.2], 0.0, RowFlag::Clean).unwrap();
        ds.push(&[0.3, -0.4], 1.0, RowFlag::Clean).unwrap();
        let eta = hinge_init(&ds).unwrap();
        assert!(hinge_objective(&ds, &eta) <= 10.0 * 3.0);
    }

    #[test]
    fn symmetric_data_gives_zero_intercept() {
        let mut ds = Dataset::new(1);
        for k in 1..=10 {
            let w = k as f64 / 10.0;
            ds.push(&[w], 1.0, RowFlag::Clean).unwrap();
            ds.push(&[-w], 0.0, RowFlag::Clean).unwrap();
        }
        let eta = hinge_init(&ds).unwrap();
        assert!(eta[0].abs() < 0.05, "{eta:?}");
    }

    #[test]
    fn rejects_counts() {
        let mut ds = Dataset::new(1);
        ds.push(&[0.0], 3.0, RowFlag::Clean).unwrap();
        assert!(hinge_init(&ds).is_err());
    }
}
