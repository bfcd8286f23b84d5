// Plugging a user-defined state-space model into the filter: a random walk
// observed through Student-t noise.

use pfvar::models::{simulate, LinearGaussianParams};
use pfvar::variance::{cle_predictor_variance, fixed_lag_predictor_variance};
use pfvar::{FeynmanKacModel, Lag, ParticleFilter, SmcRng, TestFunction};
use rand_distr::{Distribution, StandardNormal};

struct HeavyTailedWalk {
    step_sd: f64,
    dof: f64,
}

impl FeynmanKacModel for HeavyTailedWalk {
    fn sample_initial(&self, rng: &mut SmcRng) -> f64 {
        StandardNormal.sample(rng)
    }

    fn sample_transition(&self, x: f64, rng: &mut SmcRng) -> f64 {
        let e: f64 = StandardNormal.sample(rng);
        x + self.step_sd * e
    }

    /// Student-t log density up to a constant, which the filter ignores.
    fn log_potential(&self, y: f64, x: f64) -> f64 {
        let r = y - x;
        -0.5 * (self.dof + 1.0) * (1.0 + r * r / self.dof).ln()
    }
}

pub fn run_example() -> pfvar::Result<()> {
    let model = HeavyTailedWalk { step_sd: 0.3, dof: 3.0 };
    // Observations from a Gaussian model, with a few outliers mixed in.
    let params = LinearGaussianParams {
        phi: 0.99,
        sigma_u: 0.3,
        sigma_v: 0.5,
    };
    let mut ys = simulate(params.into(), 300, 9)?.observations;
    for k in (40..ys.len()).step_by(60) {
        ys[k] += 6.0;
    }

    let mut pf = ParticleFilter::new(&model, 1_000, Lag::Finite(15), 9)?;
    let h = TestFunction::Identity;
    for (t, &y) in ys.iter().enumerate() {
        pf.step(y)?;
        if (t + 1) % 50 == 0 {
            let fixed = fixed_lag_predictor_variance(&pf, &h).value;
            let full = cle_predictor_variance(&pf, &h).value;
            println!(
                "n = {:>3}: mean {:>7.3}  fixed-lag variance {fixed:.3}  full-tracing {full:.3}",
                pf.time(),
                pf.predictor_estimate(&h)
            );
        }
    }
    Ok(())
}

fn main() -> pfvar::Result<()> {
    run_example()
}
