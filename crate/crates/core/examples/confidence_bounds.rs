// Online 95% confidence intervals for the predictor mean of a linear
// Gaussian model, checked against the exact Kalman predictor.

use pfvar::experiments::ci_failure_rates;
use pfvar::models::LinearGaussianParams;
use pfvar::{ExperimentConfig, Lag, ModelConfig};

pub fn run_example() -> pfvar::Result<()> {
    let cfg = ExperimentConfig::new(
        ModelConfig::LinearGaussian(LinearGaussianParams::REFERENCE),
        500,
        100,
        vec![Lag::Finite(15)],
        50,
        5,
    );
    let ci = ci_failure_rates(&cfg)?;
    for m in (0..=cfg.n).step_by(10) {
        println!("n = {m:>3}: Kalman mean {:>8.4}, interval failure rate {:.2}", ci.kalman_means[m], ci.rates[m]);
    }
    println!("average failure rate over n = 1..{}: {:.3}", cfg.n, ci.average);
    Ok(())
}

fn main() -> pfvar::Result<()> {
    run_example()
}
