//! Linear Gaussian and stochastic volatility state-space models.
//!
//! Both are AR(1) state processes `X_{n+1} = φ X_n + σ U_{n+1}` started from
//! their stationary law `N(0, σ² / (1 - φ²))`. Gaussian variates come from
//! `rand_distr::StandardNormal` (ziggurat) on a ChaCha8 stream.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fk_model::{gaussian_log_pdf, std_normal, FeynmanKacModel, SmcRng, LN_SQRT_2PI};
use crate::seed::rng_from_seed;

fn check_ar1(phi: f64, sigma: f64, what: &str) -> Result<()> {
    if !(phi.abs() < 1.0) {
        return Err(Error::InvalidParams(format!(
            "|phi| must be < 1 for a stationary start, got phi = {phi}"
        )));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParams(format!("{what} must be nonnegative, got {sigma}")));
    }
    Ok(())
}

/// `X_{n+1} = φ X_n + σ_u U_{n+1}`, `Y_n = X_n + σ_v V_n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearGaussianParams {
    pub phi: f64,
    pub sigma_u: f64,
    pub sigma_v: f64,
}

impl LinearGaussianParams {
    /// The persistent, weakly observed setting `(φ, σ_u, σ_v) = (0.98, 0.2, 1)`.
    pub const REFERENCE: Self = LinearGaussianParams {
        phi: 0.98,
        sigma_u: 0.2,
        sigma_v: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        check_ar1(self.phi, self.sigma_u, "sigma_u")?;
        if !(self.sigma_v > 0.0) || !self.sigma_v.is_finite() {
            return Err(Error::InvalidParams(format!(
                "sigma_v must be positive, got {}",
                self.sigma_v
            )));
        }
        Ok(())
    }

    pub fn stationary_variance(&self) -> f64 {
        self.sigma_u * self.sigma_u / (1.0 - self.phi * self.phi)
    }
}

/// `X_{n+1} = φ X_n + σ U_{n+1}`, `Y_n = β exp(X_n / 2) V_n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticVolatilityParams {
    pub beta: f64,
    pub phi: f64,
    pub sigma: f64,
}

impl StochasticVolatilityParams {
    /// GBP/USD daily log-return estimates `(β, φ, σ) = (0.641, 0.975, 0.165)`.
    pub const REFERENCE: Self = StochasticVolatilityParams {
        beta: 0.641,
        phi: 0.975,
        sigma: 0.165,
    };

    pub fn validate(&self) -> Result<()> {
        check_ar1(self.phi, self.sigma, "sigma")?;
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidParams(format!("beta must be positive, got {}", self.beta)));
        }
        Ok(())
    }

    pub fn stationary_variance(&self) -> f64 {
        self.sigma * self.sigma / (1.0 - self.phi * self.phi)
    }
}

#[derive(Clone, Debug)]
pub struct LinearGaussian {
    params: LinearGaussianParams,
    stationary_sd: f64,
    obs_var: f64,
}

pub fn make_linear_gaussian(params: LinearGaussianParams) -> Result<LinearGaussian> {
    params.validate()?;
    Ok(LinearGaussian {
        params,
        stationary_sd: params.stationary_variance().sqrt(),
        obs_var: params.sigma_v * params.sigma_v,
    })
}

impl LinearGaussian {
    pub fn params(&self) -> &LinearGaussianParams {
        &self.params
    }
}

impl FeynmanKacModel for LinearGaussian {
    fn sample_initial(&self, rng: &mut SmcRng) -> f64 {
        self.stationary_sd * std_normal(rng)
    }

    fn sample_transition(&self, x: f64, rng: &mut SmcRng) -> f64 {
        self.params.phi * x + self.params.sigma_u * std_normal(rng)
    }

    fn log_potential(&self, y: f64, x: f64) -> f64 {
        gaussian_log_pdf(y, x, self.obs_var)
    }
}

#[derive(Clone, Debug)]
pub struct StochasticVolatility {
    params: StochasticVolatilityParams,
    stationary_sd: f64,
    log_beta: f64,
    inv_two_beta_sq: f64,
}

pub fn make_stochastic_volatility(params: StochasticVolatilityParams) -> Result<StochasticVolatility> {
    params.validate()?;
    Ok(StochasticVolatility {
        params,
        stationary_sd: params.stationary_variance().sqrt(),
        log_beta: params.beta.ln(),
        inv_two_beta_sq: 0.5 / (params.beta * params.beta),
    })
}

impl StochasticVolatility {
    pub fn params(&self) -> &StochasticVolatilityParams {
        &self.params
    }

    /// `sup_x g<y>(x) = e^{-1/2} / (|y| √(2π))`, attained at `x = ln(y² / β²)`.
    pub fn potential_sup(y: f64) -> f64 {
        (-0.5f64).exp() / (y.abs() * (2.0 * std::f64::consts::PI).sqrt())
    }
}

impl FeynmanKacModel for StochasticVolatility {
    fn sample_initial(&self, rng: &mut SmcRng) -> f64 {
        self.stationary_sd * std_normal(rng)
    }

    fn sample_transition(&self, x: f64, rng: &mut SmcRng) -> f64 {
        self.params.phi * x + self.params.sigma * std_normal(rng)
    }

    /// `log N(y; 0, β² e^x)`.
    fn log_potential(&self, y: f64, x: f64) -> f64 {
        -LN_SQRT_2PI - self.log_beta - 0.5 * x - y * y * self.inv_two_beta_sq * (-x).exp()
    }
}

/// Parameters of either experimental model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpaceParams {
    LinearGaussian {
        phi: f64,
        sigma_u: f64,
        sigma_v: f64,
    },
    StochasticVolatility {
        beta: f64,
        phi: f64,
        sigma: f64,
    },
}

impl From<LinearGaussianParams> for StateSpaceParams {
    fn from(p: LinearGaussianParams) -> Self {
        StateSpaceParams::LinearGaussian {
            phi: p.phi,
            sigma_u: p.sigma_u,
            sigma_v: p.sigma_v,
        }
    }
}

impl From<StochasticVolatilityParams> for StateSpaceParams {
    fn from(p: StochasticVolatilityParams) -> Self {
        StateSpaceParams::StochasticVolatility {
            beta: p.beta,
            phi: p.phi,
            sigma: p.sigma,
        }
    }
}

/// Hidden states and observations `0..n-1` of one simulated trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<f64>,
    pub observations: Vec<f64>,
}

/// Simulates `n` steps from the stationary start.
pub fn simulate(params: StateSpaceParams, n: usize, seed: u64) -> Result<Trajectory> {
    simulate_with(params, n, &mut rng_from_seed(seed))
}

pub fn simulate_with(params: StateSpaceParams, n: usize, rng: &mut SmcRng) -> Result<Trajectory> {
    if n == 0 {
        return Err(Error::InvalidConfig("simulation length must be at least 1".into()));
    }
    let mut states = Vec::with_capacity(n);
    let mut observations = Vec::with_capacity(n);
    match params {
        StateSpaceParams::LinearGaussian { phi, sigma_u, sigma_v } => {
            let model = make_linear_gaussian(LinearGaussianParams { phi, sigma_u, sigma_v })?;
            let mut x = model.sample_initial(rng);
            for k in 0..n {
                if k > 0 {
                    x = model.sample_transition(x, rng);
                }
                states.push(x);
                observations.push(x + sigma_v * std_normal(rng));
            }
        }
        StateSpaceParams::StochasticVolatility { beta, phi, sigma } => {
            let model = make_stochastic_volatility(StochasticVolatilityParams { beta, phi, sigma })?;
            let mut x = model.sample_initial(rng);
            for k in 0..n {
                if k > 0 {
                    x = model.sample_transition(x, rng);
                }
                states.push(x);
                observations.push(beta * (0.5 * x).exp() * std_normal(rng));
            }
        }
    }
    Ok(Trajectory {
        states,
        observations,
    })
}

/// Kalman predictor moments: `means[m]`, `variances[m]` describe the law of
/// `X_m` given `y_0..y_{m-1}`, for `m = 0..=len(y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KalmanTrack {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

/// Scalar Kalman prediction recursion started at the stationary prior.
pub fn kalman_predict(params: LinearGaussianParams, ys: &[f64]) -> Result<KalmanTrack> {
    params.validate()?;
    let LinearGaussianParams { phi, sigma_u, sigma_v } = params;
    let obs_var = sigma_v * sigma_v;
    let mut means = Vec::with_capacity(ys.len() + 1);
    let mut variances = Vec::with_capacity(ys.len() + 1);
    let mut mean = 0.0;
    let mut var = params.stationary_variance();
    means.push(mean);
    variances.push(var);
    for &y in ys {
        let gain = var / (var + obs_var);
        mean = phi * (mean + gain * (y - mean));
        var = phi * phi * (1.0 - gain) * var + sigma_u * sigma_u;
        means.push(mean);
        variances.push(var);
    }
    Ok(KalmanTrack { means, variances })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fk_model::potential;

    #[test]
    fn lg_potential_at_zero() {
        let lg = make_linear_gaussian(LinearGaussianParams {
            phi: 0.5,
            sigma_u: 1.0,
            sigma_v: 1.0,
        })
        .unwrap();
        assert!((potential(&lg, 0.0, 0.0).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn sv_potential_values() {
        let sv = make_stochastic_volatility(StochasticVolatilityParams {
            beta: 1.0,
            phi: 0.9,
            sigma: 0.2,
        })
        .unwrap();
        assert!((potential(&sv, 0.0, 0.0).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        // N(0; 0, e^x) = (2π e^x)^{-1/2}.
        for x in [-2.0, 0.7, 3.0] {
            let expect = (2.0 * std::f64::consts::PI * f64::exp(x)).powf(-0.5);
            assert!((potential(&sv, 0.0, x).unwrap() - expect).abs() < 1e-14);
        }

        // φ(0.5; 0, 0.641²) = exp(-0.125 / 0.410881) / (0.641 √(2π)).
        let sv = make_stochastic_volatility(StochasticVolatilityParams::REFERENCE).unwrap();
        let b2 = 0.641f64 * 0.641;
        let expect = (-0.125 / b2).exp() / (0.641 * (2.0 * std::f64::consts::PI).sqrt());
        let got = potential(&sv, 0.5, 0.0).unwrap();
        assert!((got - expect).abs() < 1e-15, "{got} vs {expect}");
        assert!((got - 0.459_123_0).abs() < 1e-6, "{got}");
    }

    #[test]
    fn sv_potential_supremum_by_grid_search() {
        let sv = make_stochastic_volatility(StochasticVolatilityParams::REFERENCE).unwrap();
        for y in [0.1, 0.5, -1.3, 2.0] {
            let best = (0..200_001)
                .map(|k| -10.0 + k as f64 * 1e-4)
                .map(|x| potential(&sv, y, x).unwrap())
                .fold(0.0, f64::max);
            let sup = StochasticVolatility::potential_sup(y);
            assert!(best <= sup * (1.0 + 1e-12));
            assert!((best - sup).abs() < 1e-6 * sup, "y={y}: {best} vs {sup}");
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(make_linear_gaussian(LinearGaussianParams {
            phi: 1.0,
            sigma_u: 0.2,
            sigma_v: 1.0
        })
        .is_err());
        assert!(make_linear_gaussian(LinearGaussianParams {
            phi: 0.5,
            sigma_u: 0.2,
            sigma_v: 0.0
        })
        .is_err());
        assert!(make_stochastic_volatility(StochasticVolatilityParams {
            beta: -1.0,
            phi: 0.5,
            sigma: 0.1
        })
        .is_err());
        assert!(make_stochastic_volatility(StochasticVolatilityParams {
            beta: 1.0,
            phi: 0.5,
            sigma: f64::NAN
        })
        .is_err());
    }

    #[test]
    fn stationary_variance_reference() {
        let v = LinearGaussianParams::REFERENCE.stationary_variance();
        assert!((v - 0.04 / (1.0 - 0.9604)).abs() < 1e-13);
        assert!((v - 1.010_101).abs() < 1e-6);
    }

    #[test]
    fn zero_phi_ignores_state() {
        let lg = make_linear_gaussian(LinearGaussianParams {
            phi: 0.0,
            sigma_u: 0.3,
            sigma_v: 1.0,
        })
        .unwrap();
        let mut a = rng_from_seed(8);
        let mut b = rng_from_seed(8);
        assert_eq!(lg.sample_transition(5.0, &mut a), lg.sample_transition(-100.0, &mut b));
    }

    #[test]
    fn noiseless_states_decay_geometrically() {
        let p = StateSpaceParams::LinearGaussian {
            phi: 0.8,
            sigma_u: 0.0,
            sigma_v: 1.0,
        };
        let t = simulate(p, 10, 4).unwrap();
        assert_eq!(t.states[0], 0.0);
        let p = StateSpaceParams::StochasticVolatility {
            beta: 1.0,
            phi: 0.8,
            sigma: 0.0,
        };
        let t = simulate(p, 10, 4).unwrap();
        assert!(t.states.iter().all(|&x| x == 0.0));

        // Nonzero start: drive the recursion by hand through the model kernel.
        let lg = make_linear_gaussian(LinearGaussianParams {
            phi: 0.8,
            sigma_u: 0.0,
            sigma_v: 1.0,
        })
        .unwrap();
        let mut rng = rng_from_seed(1);
        let mut x = 2.0;
        for k in 1..6 {
            x = lg.sample_transition(x, &mut rng);
            assert!((x - 2.0 * 0.8f64.powi(k)).abs() < 1e-15);
        }
    }

    #[test]
    fn simulation_is_reproducible() {
        let p: StateSpaceParams = StochasticVolatilityParams::REFERENCE.into();
        assert_eq!(simulate(p, 50, 17).unwrap(), simulate(p, 50, 17).unwrap());
        assert_ne!(simulate(p, 50, 17).unwrap(), simulate(p, 50, 18).unwrap());
        assert!(simulate(p, 0, 1).is_err());
    }

    #[test]
    fn lg_initial_variance_band() {
        // Sample variance of 1e5 stationary draws; SE of the variance ≈ σ̃² √(2/n).
        let lg = make_linear_gaussian(LinearGaussianParams::REFERENCE).unwrap();
        let mut rng = rng_from_seed(2024);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| lg.sample_initial(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let target = LinearGaussianParams::REFERENCE.stationary_variance();
        let se = target * (2.0 / n as f64).sqrt();
        assert!((var - target).abs() < 3.0 * se, "{var} vs {target}");
    }

    #[test]
    fn kalman_limits() {
        let ys = [1.0, -2.0, 3.0, 0.5];
        let flat = kalman_predict(
            LinearGaussianParams {
                phi: 0.9,
                sigma_u: 0.5,
                sigma_v: 1e12,
            },
            &ys,
        )
        .unwrap();
        assert!(flat.means.iter().all(|m| m.abs() < 1e-20));

        let memoryless = kalman_predict(
            LinearGaussianParams {
                phi: 0.0,
                sigma_u: 0.5,
                sigma_v: 1.0,
            },
            &ys,
        )
        .unwrap();
        assert_eq!(memoryless.means.len(), 5);
        assert!(memoryless.means.iter().all(|&m| m == 0.0));
        assert!(memoryless.variances.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn kalman_matches_direct_gaussian_conditioning() {
        // Joint Gaussian of (X_0, X_1, Y_0): condition X_1 on Y_0 directly.
        let p = LinearGaussianParams {
            phi: 0.7,
            sigma_u: 0.4,
            sigma_v: 0.9,
        };
        let s2 = p.stationary_variance();
        let y0 = 1.3;
        let cov_x1_y0 = p.phi * s2;
        let var_y0 = s2 + p.sigma_v * p.sigma_v;
        let mean = cov_x1_y0 / var_y0 * y0;
        let var = s2 - cov_x1_y0 * cov_x1_y0 / var_y0;
        let k = kalman_predict(p, &[y0]).unwrap();
        assert!((k.means[1] - mean).abs() < 1e-14);
        assert!((k.variances[1] - var).abs() < 1e-14);
    }
}
