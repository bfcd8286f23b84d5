// One long stochastic volatility run: the Eve indices coalesce to a single
// ancestor and the full-tracing estimate collapses to zero, while the
// fixed-lag estimate stays informative.

use pfvar::experiments::long_run;
use pfvar::models::StochasticVolatilityParams;
use pfvar::{ExperimentConfig, Lag, ModelConfig};

pub fn run_example() -> pfvar::Result<()> {
    let mut cfg = ExperimentConfig::new(
        ModelConfig::StochasticVolatility(StochasticVolatilityParams::REFERENCE),
        300,
        1000,
        vec![Lag::Finite(20)],
        1,
        2871,
    );
    cfg.thin = 100;
    println!("{:>6} {:>10} {:>10} {:>6} {:>6}", "n", "fixed-lag", "full", "eve", "enoch");
    for row in long_run(&cfg)? {
        println!(
            "{:>6} {:>10.4} {:>10.4} {:>6} {:>6}",
            row.n, row.fixed_lag, row.cle, row.eve_count, row.enoch_count
        );
    }
    Ok(())
}

fn main() -> pfvar::Result<()> {
    run_example()
}
