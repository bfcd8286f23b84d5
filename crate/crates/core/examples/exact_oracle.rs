// Exact truncated asymptotic variances of a two-state hidden Markov model,
// compared with the mean fixed-lag estimate over independent filters.

use std::collections::BTreeMap;

use pfvar::exact::{exact_asymptotic_variance, exact_bias};
use pfvar::seed::derive_seed;
use pfvar::variance::predictor_variance_at_lag;
use pfvar::{DiscreteModel, Lag, ParticleFilter, TestFunction};

pub fn run_example() -> pfvar::Result<()> {
    let dm = DiscreteModel::new(
        vec![0.5, 0.5],
        vec![vec![0.9, 0.1], vec![0.15, 0.85]],
        BTreeMap::from([(0, vec![1.0, 0.2]), (1, vec![0.25, 1.2])]),
    )?;
    let zs = [0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
    let h = [0.0, 1.0];
    let n = zs.len();

    let particles = 2_000;
    let replicates = 100;
    let mut sums = vec![0.0; n + 1];
    for r in 0..replicates {
        let mut pf = ParticleFilter::new(&dm, particles, Lag::Finite(n), derive_seed(7, 0, r))?;
        for &z in &zs {
            pf.step(z)?;
        }
        for (lag, sum) in sums.iter_mut().enumerate() {
            *sum += predictor_variance_at_lag(&pf, &TestFunction::state_indicator(1), Lag::Finite(lag))?.value;
        }
    }

    println!("{:>4} {:>12} {:>12} {:>12}", "lag", "exact", "estimated", "bias");
    for lag in 0..=n {
        let exact = exact_asymptotic_variance(&dm, &zs, &h, n - lag)?.value;
        let bias = exact_bias(&dm, &zs, &h, Lag::Finite(lag))?;
        let estimated = sums[lag] / replicates as f64;
        println!("{lag:>4} {exact:>12.6} {estimated:>12.6} {bias:>12.3e}");
    }
    Ok(())
}

fn main() -> pfvar::Result<()> {
    run_example()
}
