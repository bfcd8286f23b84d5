// Fixed-lag variance estimates on the stochastic volatility model for a range
// of lags, next to a brute-force reference from independent replicates.
//
// Short lags underestimate the variance; full tracing (`inf`) suffers from
// path degeneracy. Run with `cargo run --release --example lag_sweep`.

use pfvar::experiments::lag_sweep;
use pfvar::models::StochasticVolatilityParams;
use pfvar::{ExperimentConfig, Lag, ModelConfig};

pub fn run_example() -> pfvar::Result<()> {
    let mut cfg = ExperimentConfig::new(
        ModelConfig::StochasticVolatility(StochasticVolatilityParams::REFERENCE),
        500,
        100,
        vec![Lag::Finite(2), Lag::Finite(5), Lag::Finite(10), Lag::Finite(20), Lag::Full],
        20,
        1981,
    );
    cfg.reference_replicates = 100;

    let sweep = lag_sweep(&cfg)?;
    let reference = sweep.reference.as_ref().map(|r| r.value).unwrap_or(f64::NAN);
    println!("N = {}, n = {}, {} replicates", cfg.particles, cfg.n, cfg.replicates);
    println!("{:>5} {:>10} {:>10}", "lag", "mean", "std");
    for s in &sweep.per_lag {
        println!("{:>5} {:>10.4} {:>10.4}", s.lag.to_string(), s.mean, s.std_dev);
    }
    println!("brute-force reference: {reference:.4}");
    Ok(())
}

fn main() -> pfvar::Result<()> {
    run_example()
}
