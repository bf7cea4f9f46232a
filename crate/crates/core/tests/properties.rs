mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rhoreg::rho::{psi, psi_sqrt_ratio, t_statistic};
use rhoreg::NaturalExpFamily;

#[test]
fn hellinger_closed_form_matches_brute_force() {
    common::check_hellinger_closed_form(20, 2024).unwrap();
}

#[test]
fn psi_identities() {
    common::check_psi_identities().unwrap();
}

#[test]
fn t_is_antisymmetric_and_bounded() {
    common::check_t_properties(200, 5).unwrap();
}

#[test]
fn upsilon_is_nonnegative() {
    common::check_upsilon_nonnegative(20, 6).unwrap();
}

#[test]
fn mle_gradient_matches_finite_differences() {
    common::check_mle_gradient(30, 8).unwrap();
}

#[test]
fn contaminated_hellinger_is_bounded_by_rate() {
    common::check_mixture_bound(50, 9).unwrap();
}

#[test]
fn risk_mc_replays_exactly() {
    common::check_replay().unwrap();
}

proptest! {
    #[test]
    fn psi_is_odd_under_inversion(x in 1e-8f64..1e8) {
        let a = psi(x).unwrap();
        let b = psi(1.0 / x).unwrap();
        prop_assert!((a + b).abs() <= 1e-15);
        prop_assert!((-1.0..=1.0).contains(&a));
    }

    #[test]
    fn psi_of_sqrt_ratio_is_tanh(lq in -50.0f64..50.0, lq2 in -50.0f64..50.0) {
        let direct = psi(((lq - lq2) / 2.0).exp()).unwrap();
        prop_assert!((psi_sqrt_ratio(lq, lq2) - direct).abs() <= 1e-12);
    }

    #[test]
    fn t_antisymmetry(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = common::random_instance(&mut rng);
        let ab = t_statistic(&inst.data, &inst.fam, &inst.model, &inst.eta, &inst.eta_p).unwrap();
        let ba = t_statistic(&inst.data, &inst.fam, &inst.model, &inst.eta_p, &inst.eta).unwrap();
        prop_assert!((ab + ba).abs() <= 1e-9 * inst.data.len() as f64);
        prop_assert!(ab.abs() <= inst.data.len() as f64);
    }

    #[test]
    fn hellinger_is_a_symmetric_fraction(t in 0.01f64..8.0, tp in 0.01f64..8.0) {
        for fam in [NaturalExpFamily::Poisson, NaturalExpFamily::Exponential, NaturalExpFamily::Bernoulli] {
            let a = fam.hellinger_sq(t, tp).unwrap();
            let b = fam.hellinger_sq(tp, t).unwrap();
            prop_assert!((a - b).abs() <= 1e-15);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
