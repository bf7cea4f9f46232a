//! Parameter classes Θ: a finite vector η is mapped to a regression
//! function θ(·) on the covariate space.
//!
//! The three link models act on the linear predictor `z = η₀ + ⟨η₁:d, w⟩`;
//! piecewise-constant models on [0, 1] take one value per cell, optionally
//! through a general parametrization of the family.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expfam::{GeneralParametrization, Interval, NaturalExpFamily};
use crate::numeric::{log_softplus, sigmoid, softplus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// θ(w) = z.
    Linear,
    /// θ(w) = log log(1 + e^z).
    Loglog1pexp,
    /// θ(w) = log(1 + e^z).
    Log1pexp,
    /// θ(w) = u(η_j) on the j-th cell of a regular partition of [0, 1].
    PiecewiseConstant,
}

impl ModelKind {
    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "linear" => Ok(Self::Linear),
            "loglog1pexp" => Ok(Self::Loglog1pexp),
            "log1pexp" => Ok(Self::Log1pexp),
            "piecewise_constant" => Ok(Self::PiecewiseConstant),
            other => Err(Error::InvalidConfig(format!("unknown model kind {other:?}"))),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Loglog1pexp => "loglog1pexp",
            Self::Log1pexp => "log1pexp",
            Self::PiecewiseConstant => "piecewise_constant",
        }
    }

    /// The link model the simulation study pairs with each family.
    pub fn default_for(fam: &NaturalExpFamily) -> Self {
        match fam {
            NaturalExpFamily::Poisson => Self::Loglog1pexp,
            NaturalExpFamily::Exponential => Self::Log1pexp,
            _ => Self::Linear,
        }
    }
}

/// Per-coordinate bounds for η used by the derivative-free optimizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SearchBox {
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Self {
        SearchBox {
            lower: vec![lo; dim],
            upper: vec![hi; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    pub fn clip(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }

    pub fn clipped(&self, x: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        self.clip(&mut v);
        v
    }

    /// Largest per-coordinate width.
    pub fn max_width(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .fold(0.0, f64::max)
    }
}

/// A parametrized class of regression functions.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionModel {
    pub kind: ModelKind,
    pub dim_p: usize,
    pub covariate_dim: usize,
    /// Where θ(w) takes its values (the family's `I`).
    pub codomain: Interval,
    /// For piecewise-constant models: how cell values map to natural
    /// parameters. `None` means cell values are natural parameters.
    pub parametrization: Option<GeneralParametrization>,
    pub vc_bound: usize,
    pub search_box: SearchBox,
}

/// Default box half-width for the link models.
pub const DEFAULT_BOX_HALF_WIDTH: f64 = 20.0;

impl RegressionModel {
    /// One of the link models on ℝ^d with `d + 1` coefficients.
    pub fn link(kind: ModelKind, covariate_dim: usize) -> Result<Self> {
        let codomain = match kind {
            ModelKind::Linear | ModelKind::Loglog1pexp => Interval::REAL_LINE,
            ModelKind::Log1pexp => Interval::POSITIVE,
            ModelKind::PiecewiseConstant => {
                return Err(Error::Precondition(
                    "use RegressionModel::piecewise_constant for cell models".into(),
                ))
            }
        };
        let dim_p = covariate_dim + 1;
        Ok(RegressionModel {
            kind,
            dim_p,
            covariate_dim,
            codomain,
            parametrization: None,
            // (d+1)-dimensional linear space composed with a monotone map.
            vc_bound: dim_p + 1,
            search_box: SearchBox::uniform(dim_p, -DEFAULT_BOX_HALF_WIDTH, DEFAULT_BOX_HALF_WIDTH),
        })
    }

    pub fn linear(covariate_dim: usize) -> Self {
        Self::link(ModelKind::Linear, covariate_dim).expect("link model")
    }

    pub fn loglog1pexp(covariate_dim: usize) -> Self {
        Self::link(ModelKind::Loglog1pexp, covariate_dim).expect("link model")
    }

    pub fn log1pexp(covariate_dim: usize) -> Self {
        Self::link(ModelKind::Log1pexp, covariate_dim).expect("link model")
    }

    /// Piecewise-constant functions on `cells` equal-length cells of [0, 1].
    /// `search_box` bounds the cell values (in the parametrization's units).
    pub fn piecewise_constant(
        cells: usize,
        fam: &NaturalExpFamily,
        parametrization: Option<GeneralParametrization>,
        search_box: SearchBox,
    ) -> Result<Self> {
        if cells == 0 {
            return Err(Error::Precondition("at least one cell is required".into()));
        }
        if search_box.dim() != cells {
            return Err(Error::DimensionMismatch {
                expected: cells,
                got: search_box.dim(),
                context: "piecewise-constant search box",
            });
        }
        Ok(RegressionModel {
            kind: ModelKind::PiecewiseConstant,
            dim_p: cells,
            covariate_dim: 1,
            codomain: fam.interval(),
            parametrization,
            vc_bound: cells + 1,
            search_box,
        })
    }

    pub fn with_search_box(mut self, b: SearchBox) -> Result<Self> {
        if b.dim() != self.dim_p {
            return Err(Error::DimensionMismatch {
                expected: self.dim_p,
                got: b.dim(),
                context: "search box",
            });
        }
        self.search_box = b;
        Ok(self)
    }

    pub fn vc_dim_bound(&self) -> usize {
        self.vc_bound
    }

    /// Cell index of `w ∈ [0, 1]`: `[(j−1)/D, j/D)` with the last cell closed.
    #[inline]
    pub fn cell_of(&self, w: f64) -> usize {
        let d = self.dim_p;
        ((w * d as f64).floor() as usize).min(d - 1)
    }

    pub fn check_dims(&self, eta: &[f64], w: &[f64]) -> Result<()> {
        if eta.len() != self.dim_p {
            return Err(Error::DimensionMismatch {
                expected: self.dim_p,
                got: eta.len(),
                context: "parameter vector",
            });
        }
        if w.len() != self.covariate_dim {
            return Err(Error::DimensionMismatch {
                expected: self.covariate_dim,
                got: w.len(),
                context: "covariate vector",
            });
        }
        Ok(())
    }

    /// θ_η(w), checked.
    pub fn eval_theta(&self, eta: &[f64], w: &[f64]) -> Result<f64> {
        self.check_dims(eta, w)?;
        if self.kind == ModelKind::PiecewiseConstant && !(0.0..=1.0).contains(&w[0]) {
            return Err(Error::domain("w", w[0], "[0, 1]"));
        }
        let t = self.eval_unchecked(eta, w);
        if !self.codomain.contains(t) {
            return Err(Error::domain("theta(w)", t, self.codomain));
        }
        Ok(t)
    }

    /// Linear predictor `η₀ + ⟨η₁:d, w⟩`.
    #[inline]
    pub fn linear_predictor(eta: &[f64], w: &[f64]) -> f64 {
        let mut z = eta[0];
        for (e, x) in eta[1..].iter().zip(w) {
            z += e * x;
        }
        z
    }

    #[inline]
    pub fn eval_unchecked(&self, eta: &[f64], w: &[f64]) -> f64 {
        match self.kind {
            ModelKind::Linear => Self::linear_predictor(eta, w),
            ModelKind::Loglog1pexp => log_softplus(Self::linear_predictor(eta, w)),
            ModelKind::Log1pexp => softplus(Self::linear_predictor(eta, w)),
            ModelKind::PiecewiseConstant => {
                let v = eta[self.cell_of(w[0])];
                match &self.parametrization {
                    Some(p) => p.u(v),
                    None => v,
                }
            }
        }
    }

    /// Link `g(z)` with first and second derivatives. Only meaningful for the
    /// link models.
    #[inline]
    pub fn link_derivs(&self, z: f64) -> (f64, f64, f64) {
        match self.kind {
            ModelKind::Linear => (z, 1.0, 0.0),
            ModelKind::Log1pexp => {
                let s = sigmoid(z);
                (softplus(z), s, s * (1.0 - s))
            }
            ModelKind::Loglog1pexp => {
                let s = sigmoid(z);
                let sp = softplus(z);
                let r = s / sp;
                // d/dz (σ/sp) = σ(1−σ)/sp − σ²/sp²
                (log_softplus(z), r, s * (1.0 - s) / sp - r * r)
            }
            ModelKind::PiecewiseConstant => (f64::NAN, f64::NAN, f64::NAN),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionRegime {
    /// Variance-stabilized parametrization.
    Stabilized,
    /// Poisson family parametrized by its mean.
    PoissonMean,
}

/// Number of cells `D(α, M, n)` for piecewise-constant fits of a Hölder
/// target. `kappa` is the Lipschitz constant of the parametrization (only
/// used in the stabilized regime).
pub fn holder_partition_dim(
    alpha: f64,
    m: f64,
    n: usize,
    kappa: f64,
    regime: PartitionRegime,
) -> Result<usize> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain("alpha", alpha, "(0, 1]"));
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::domain("M", m, "(0, inf)"));
    }
    if n == 0 {
        return Err(Error::domain("n", 0.0, "[1, inf)"));
    }
    let nf = n as f64;
    let log_en = 1.0 + nf.ln();
    let x = match regime {
        PartitionRegime::Stabilized => {
            if !(kappa > 0.0) {
                return Err(Error::domain("kappa", kappa, "(0, inf)"));
            }
            (kappa * kappa * m * m * nf / log_en).powf(1.0 / (1.0 + 2.0 * alpha))
        }
        PartitionRegime::PoissonMean => (m * nf / (2.0 * log_en)).powf(1.0 / (1.0 + alpha)),
    };
    Ok((x.ceil() as usize).max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn eval_examples() {
        let w = [0.25; 5];
        let zero = [0.0; 6];
        let sp = RegressionModel::log1pexp(5).eval_theta(&zero, &w).unwrap();
        assert!((sp - LN_2).abs() < 1e-15);
        let ll = RegressionModel::loglog1pexp(5).eval_theta(&zero, &w).unwrap();
        assert!((ll - (-0.366_512_920_581_664_3)).abs() < 1e-15);
        let lin = RegressionModel::linear(5).eval_theta(&[1.0; 6], &w).unwrap();
        assert_eq!(lin, 2.25);
    }

    #[test]
    fn eval_rejects_bad_dims_and_range() {
        let m = RegressionModel::linear(5);
        assert!(matches!(
            m.eval_theta(&[0.0; 5], &[0.0; 5]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(m.eval_theta(&[0.0; 6], &[0.0; 4]).is_err());
        let pc = RegressionModel::piecewise_constant(
            3,
            &NaturalExpFamily::Poisson,
            None,
            SearchBox::uniform(3, -5.0, 5.0),
        )
        .unwrap();
        assert!(pc.eval_theta(&[0.0; 3], &[1.2]).is_err());
    }

    #[test]
    fn vc_bounds() {
        assert_eq!(RegressionModel::linear(5).vc_dim_bound(), 7);
        assert_eq!(RegressionModel::loglog1pexp(5).vc_dim_bound(), 7);
        let fam = NaturalExpFamily::Poisson;
        for (d, v) in [(3, 4), (1, 2)] {
            let m =
                RegressionModel::piecewise_constant(d, &fam, None, SearchBox::uniform(d, 0.0, 1.0))
                    .unwrap();
            assert_eq!(m.vc_dim_bound(), v);
        }
    }

    #[test]
    fn piecewise_cells_are_right_continuous() {
        let fam = NaturalExpFamily::Poisson;
        let m = RegressionModel::piecewise_constant(
            4,
            &fam,
            Some(fam.mean_parametrization()),
            SearchBox::uniform(4, 1e-3, 100.0),
        )
        .unwrap();
        let eta = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(m.eval_theta(&eta, &[0.0]).unwrap(), 0.0);
        assert_eq!(m.eval_theta(&eta, &[0.2499]).unwrap(), 0.0);
        assert_eq!(m.eval_theta(&eta, &[0.25]).unwrap(), 2f64.ln());
        assert_eq!(m.eval_theta(&eta, &[0.75]).unwrap(), 4f64.ln());
        assert_eq!(m.eval_theta(&eta, &[1.0]).unwrap(), 4f64.ln());
    }

    #[test]
    fn links_are_strictly_increasing() {
        for m in [RegressionModel::loglog1pexp(1), RegressionModel::log1pexp(1)] {
            let mut prev = f64::NEG_INFINITY;
            for k in 0..=400 {
                let z = -25.0 + 0.125 * k as f64;
                let t = m.eval_unchecked(&[z, 0.0], &[0.0]);
                assert!(t > prev, "{:?} at {z}", m.kind);
                prev = t;
            }
        }
    }

    #[test]
    fn log1pexp_is_positive_over_box() {
        let m = RegressionModel::log1pexp(5);
        let eta = [-20.0; 6];
        assert!(m.eval_theta(&eta, &[0.1; 5]).unwrap() > 0.0);
    }

    #[test]
    fn link_derivatives_match_finite_differences() {
        for m in [
            RegressionModel::linear(1),
            RegressionModel::loglog1pexp(1),
            RegressionModel::log1pexp(1),
        ] {
            for &z in &[-8.0, -1.0, 0.0, 0.5, 3.0, 12.0] {
                let h = 1e-5;
                let (_, d1, d2) = m.link_derivs(z);
                let g = |x: f64| m.link_derivs(x).0;
                let fd1 = (g(z + h) - g(z - h)) / (2.0 * h);
                let fd2 = (m.link_derivs(z + h).1 - m.link_derivs(z - h).1) / (2.0 * h);
                assert!((d1 - fd1).abs() < 1e-7, "{:?} d1 at {z}", m.kind);
                assert!((d2 - fd2).abs() < 1e-7, "{:?} d2 at {z}", m.kind);
            }
        }
    }

    #[test]
    fn partition_dims() {
        use PartitionRegime::*;
        assert_eq!(holder_partition_dim(1.0, 1.0, 100, 1.0, Stabilized).unwrap(), 3);
        assert_eq!(holder_partition_dim(1.0, 1.0, 100, 1.0, PoissonMean).unwrap(), 3);
        assert_eq!(holder_partition_dim(1.0, 1e-12, 100, 1.0, Stabilized).unwrap(), 1);
        assert!(holder_partition_dim(0.0, 1.0, 100, 1.0, Stabilized).is_err());
        assert!(holder_partition_dim(1.5, 1.0, 100, 1.0, PoissonMean).is_err());
    }
}
