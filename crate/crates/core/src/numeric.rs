//! Small numerical kernels shared across modules: stable softplus-type
//! functions, adaptive Gauss–Kronrod quadrature, order statistics and the
//! counter-based seed mixer used to derive independent random streams.

/// `log(1 + e^x)` without overflow or cancellation.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log(log(1 + e^x))`, accurate in both tails.
#[inline]
pub fn log_softplus(x: f64) -> f64 {
    if x < -30.0 {
        // log1p(e^x) = e^x (1 - e^x/2 + ...)
        x - 0.5 * x.exp()
    } else {
        softplus(x).ln()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`softplus`] on `(0, ∞)`: `log(e^y - 1)`.
#[inline]
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

// Gauss–Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod (G7/K15) quadrature on a finite interval.
///
/// Bisects the panel with the largest error estimate until the summed error
/// estimate drops below `abs_tol` or the panel cap is reached.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    const MAX_PANELS: usize = 400;
    let (v, e) = gk15(&mut f, a, b);
    let mut panels = vec![(a, b, v, e)];
    loop {
        let total_err: f64 = panels.iter().map(|p| p.3).sum();
        if total_err <= abs_tol || panels.len() >= MAX_PANELS {
            break;
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = panels.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        panels.push((lo, mid, v1, e1));
        panels.push((mid, hi, v2, e2));
    }
    panels.iter().map(|p| p.2).sum()
}

/// Integral over `[a, ∞)` through the map `x = a + t / (1 - t)`.
pub fn integrate_to_infinity<F: FnMut(f64) -> f64>(mut f: F, a: f64, abs_tol: f64) -> f64 {
    integrate(
        |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let one_minus = 1.0 - t;
            let x = a + t / one_minus;
            let v = f(x) / (one_minus * one_minus);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        abs_tol,
    )
}

/// Sample quantile with linear interpolation between order statistics
/// (the "type 7" definition). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a, stable across platforms and toolchains.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives an independent stream seed from a master seed, a label and a
/// counter. Used for per-replication and per-purpose streams.
pub fn derive_seed(master: u64, label: &str, counter: u64) -> u64 {
    let a = splitmix64(master ^ fnv1a(label.as_bytes()));
    splitmix64(a ^ splitmix64(counter.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_branches_agree_with_definition() {
        for &x in &[-40.0, -5.0, -0.3, 0.0, 0.7, 12.0, 29.9, 30.1, 45.0] {
            let naive = f64::exp(x).ln_1p();
            assert!((softplus(x) - naive).abs() <= 1e-12 * naive.abs().max(1e-300));
        }
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
    }

    #[test]
    fn log_softplus_tails() {
        assert!((log_softplus(0.0) - (2.0f64.ln()).ln()).abs() < 1e-15);
        assert!((log_softplus(-50.0) - (-50.0)).abs() < 1e-20);
        assert!((log_softplus(-29.0) - softplus(-29.0).ln()).abs() < 1e-12);
        assert!(log_softplus(-800.0).is_finite());
    }

    #[test]
    fn softplus_inverse_round_trips() {
        for &x in &[-20.0, -1.0, 0.0, 2.5, 40.0] {
            assert!((softplus_inv(softplus(x)) - x).abs() < 1e-9);
        }
    }

    #[test]
    fn quadrature_polynomial_and_tail() {
        let v = integrate(|x| x * x * x - x, 0.0, 2.0, 1e-12);
        assert!((v - 2.0).abs() < 1e-12);
        let g = integrate_to_infinity(|x| (-x).exp(), 0.0, 1e-11);
        assert!((g - 1.0).abs() < 1e-9);
        let peaked = integrate(|x| 40.0 * (-40.0 * x).exp(), 0.0, 50.0, 1e-11);
        assert!((peaked - 1.0).abs() < 1e-9);
    }

    #[test]
    fn quantiles_type7() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert!((quantile_sorted(&v, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile_sorted(&v, 0.25) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, "poisson_ws", 0);
        let b = derive_seed(1, "poisson_ws", 1);
        let c = derive_seed(1, "exponential_ws", 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(1, "poisson_ws", 0));
    }
}
