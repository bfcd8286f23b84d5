// Variance estimation for the weighted (filter) particle mean, in both the
// weighted and the ratio form, with a confidence interval for `E[X_n | y_0..y_n]`.

use pfvar::models::{make_stochastic_volatility, simulate, StochasticVolatilityParams};
use pfvar::variance::{
    confidence_interval, fixed_lag_filter_variance, fixed_lag_filter_variance_ratio, QuantileFamily,
};
use pfvar::{Lag, ParticleFilter, TestFunction};

pub fn run_example() -> pfvar::Result<()> {
    let params = StochasticVolatilityParams::REFERENCE;
    let model = make_stochastic_volatility(params)?;
    let ys = simulate(params.into(), 201, 3)?.observations;
    let particles = 1_000;
    let mut pf = ParticleFilter::new(&model, particles, Lag::Finite(20), 3)?;
    let h = TestFunction::Identity;

    for (t, &y) in ys.iter().enumerate() {
        pf.reweight(y)?;
        if t % 50 == 0 {
            let mean = pf.filter_estimate(&h)?;
            let weighted = fixed_lag_filter_variance(&pf, &h)?.value;
            let ratio = fixed_lag_filter_variance_ratio(&pf, &h)?.value;
            let (lo, hi) = confidence_interval(mean, weighted, particles, 0.95, QuantileFamily::Gaussian)?;
            println!("n = {t:>3}: mean {mean:>7.4}  variance {weighted:.4} (ratio form {ratio:.4})  95% [{lo:.4}, {hi:.4}]");
        }
        pf.propagate()?;
    }
    Ok(())
}

fn main() -> pfvar::Result<()> {
    run_example()
}
