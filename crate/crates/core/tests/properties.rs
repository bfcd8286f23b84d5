//! Invariances of the variance estimators under transformations of the
//! potential and the test function.

mod common;

use proptest::prelude::*;

use common::random_discrete;
use pfvar::seed::derive_seed;
use pfvar::variance::{
    cle_predictor_variance, filter_variance_ratio_from, filter_variance_weighted_from, fixed_lag_filter_variance,
    fixed_lag_predictor_variance, predictor_variance_from,
};
use pfvar::{FeynmanKacModel, Lag, ParticleFilter, SmcRng, TestFunction};

/// Wraps a model and adds a constant to its log-potential.
struct Shifted<M> {
    inner: M,
    shift: f64,
}

impl<M: FeynmanKacModel> FeynmanKacModel for Shifted<M> {
    fn sample_initial(&self, rng: &mut SmcRng) -> f64 {
        self.inner.sample_initial(rng)
    }
    fn sample_transition(&self, x: f64, rng: &mut SmcRng) -> f64 {
        self.inner.sample_transition(x, rng)
    }
    fn log_potential(&self, z: f64, x: f64) -> f64 {
        self.inner.log_potential(z, x) + self.shift
    }
}

fn run_both<M: FeynmanKacModel>(model: &M, particles: usize, lag: usize, zs: &[f64], seed: u64) -> (f64, f64) {
    let mut pf = ParticleFilter::new(model, particles, Lag::Finite(lag), seed).unwrap();
    let (last, head) = zs.split_last().unwrap();
    for &z in head {
        pf.step(z).unwrap();
    }
    let h = TestFunction::state_indicator(1);
    let pred = fixed_lag_predictor_variance(&pf, &h).value;
    pf.reweight(*last).unwrap();
    (pred, fixed_lag_filter_variance(&pf, &h).unwrap().value)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn potential_rescaling_leaves_estimates_unchanged(
        index in 0u64..1000,
        shift in -300.0f64..300.0,
        particles in 2usize..200,
        lag in 0usize..6,
        len in 1usize..20,
        seed in any::<u64>(),
    ) {
        let dm = random_discrete(7, index);
        let zs = common::random_symbols(7, index, len);
        let base = run_both(&dm, particles, lag, &zs, seed);
        let shifted = run_both(&Shifted { inner: dm, shift }, particles, lag, &zs, seed);
        prop_assert!((base.0 - shifted.0).abs() <= 1e-10 * base.0.max(1e-300), "{:?} vs {:?}", base, shifted);
        prop_assert!((base.1 - shifted.1).abs() <= 1e-10 * base.1.max(1e-300), "{:?} vs {:?}", base, shifted);
    }

    #[test]
    fn estimators_ignore_shifts_and_scale_quadratically(
        data in prop::collection::vec((-5.0f64..5.0, 0.01f64..3.0, 0usize..8), 1..40),
        c in -10.0f64..10.0,
    ) {
        let n = data.len();
        let h: Vec<f64> = data.iter().map(|d| d.0).collect();
        let w: Vec<f64> = data.iter().map(|d| d.1).collect();
        let groups: Vec<usize> = data.iter().map(|d| d.2 % n).collect();
        let shifted: Vec<f64> = h.iter().map(|v| v + c).collect();
        let scaled: Vec<f64> = h.iter().map(|v| v * c).collect();

        let p = predictor_variance_from(&h, &groups);
        let fw = filter_variance_weighted_from(&h, &w, &groups);
        let fr = filter_variance_ratio_from(&h, &w, &groups);
        let tol = |x: f64| 1e-9 * (1.0 + x.abs() * (1.0 + c * c));

        prop_assert!(p >= 0.0 && fw >= 0.0 && fr >= 0.0);
        prop_assert!((predictor_variance_from(&shifted, &groups) - p).abs() <= tol(p));
        prop_assert!((filter_variance_weighted_from(&shifted, &w, &groups) - fw).abs() <= tol(fw));
        prop_assert!((predictor_variance_from(&scaled, &groups) - c * c * p).abs() <= tol(p));
        prop_assert!((filter_variance_weighted_from(&scaled, &w, &groups) - c * c * fw).abs() <= tol(fw));
        prop_assert!((fr - fw).abs() <= tol(fw));
    }

    #[test]
    fn lag_beyond_horizon_is_the_eve_estimator(
        index in 0u64..1000,
        particles in 1usize..100,
        len in 0usize..15,
        extra in 0usize..4,
        seed in any::<u64>(),
    ) {
        let dm = random_discrete(8, index);
        let zs = common::random_symbols(8, index, len);
        let mut pf = ParticleFilter::new(&dm, particles, Lag::Finite(len + extra), seed).unwrap();
        let h = TestFunction::state_indicator(0);
        for &z in &zs {
            pf.step(z).unwrap();
            let a = fixed_lag_predictor_variance(&pf, &h).value;
            let b = cle_predictor_variance(&pf, &h).value;
            prop_assert_eq!(a, b);
            prop_assert!(a >= 0.0);
        }
    }
}

#[test]
fn zero_lag_groups_every_particle_alone() {
    // With λ = 0 each particle is its own group, so the estimator reduces to
    // the biased sample variance of h.
    let dm = random_discrete(9, 0);
    let zs = common::random_symbols(9, 0, 5);
    let mut pf = ParticleFilter::new(&dm, 300, Lag::Finite(0), derive_seed(9, 0, 0)).unwrap();
    for &z in &zs {
        pf.step(z).unwrap();
    }
    let h = TestFunction::state_indicator(1);
    let values = h.eval_all(pf.positions());
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let sample_var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    let est = fixed_lag_predictor_variance(&pf, &h).value;
    assert!((est - sample_var).abs() < 1e-14, "{est} vs {sample_var}");
}
