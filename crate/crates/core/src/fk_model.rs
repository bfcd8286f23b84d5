//! Perturbed Feynman-Kac models.
//!
//! A model is the triple of an initial law, a Markov transition and a family
//! of positive potentials indexed by a perturbation (for state-space models,
//! the observation). States and perturbations are real scalars; finite-state
//! models encode their state index as an `f64`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};

/// Random number generator used by every filter and simulator in the crate.
pub type SmcRng = rand_chacha::ChaCha8Rng;

pub(crate) const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Natural log of the Gaussian density `N(x; mean, var)`.
pub fn gaussian_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -LN_SQRT_2PI - 0.5 * var.ln() - 0.5 * d * d / var
}

/// The `(initial law, transition, potential)` triple consumed by filters.
///
/// Implementations must be pure functions of their inputs and of the RNG
/// stream they are handed, so that a fixed seed reproduces a run exactly.
pub trait FeynmanKacModel: Send + Sync {
    /// One draw from the initial distribution.
    fn sample_initial(&self, rng: &mut SmcRng) -> f64;

    /// One draw from the transition kernel started at `x`.
    fn sample_transition(&self, x: f64, rng: &mut SmcRng) -> f64;

    /// Natural log of the potential `g<z>(x)`.
    fn log_potential(&self, z: f64, x: f64) -> f64;

    /// Dimension of the state. Every model shipped here is scalar.
    fn state_dim(&self) -> usize {
        1
    }
}

impl<M: FeynmanKacModel + ?Sized> FeynmanKacModel for Arc<M> {
    fn sample_initial(&self, rng: &mut SmcRng) -> f64 {
        (**self).sample_initial(rng)
    }
    fn sample_transition(&self, x: f64, rng: &mut SmcRng) -> f64 {
        (**self).sample_transition(x, rng)
    }
    fn log_potential(&self, z: f64, x: f64) -> f64 {
        (**self).log_potential(z, x)
    }
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
}

/// Evaluates `g<z>(x)` and checks that it is usable as a weight.
pub fn potential<M: FeynmanKacModel + ?Sized>(model: &M, z: f64, x: f64) -> Result<f64> {
    let lp = checked_log_potential(model, z, x)?;
    Ok(lp.exp())
}

/// Log-potential with NaN and `+inf` rejected. `-inf` (a zero weight) is
/// passed through; resampling reports it if every particle ends up there.
pub(crate) fn checked_log_potential<M: FeynmanKacModel + ?Sized>(
    model: &M,
    z: f64,
    x: f64,
) -> Result<f64> {
    let lp = model.log_potential(z, x);
    if lp.is_nan() || lp == f64::INFINITY {
        return Err(Error::NonFinitePotential {
            log_potential: lp,
            state: x,
            perturbation: z,
        });
    }
    Ok(lp)
}

/// Bounded test function `h` applied to particle states.
#[derive(Clone)]
pub enum TestFunction {
    Identity,
    /// `1{lo <= x < hi}`.
    Indicator { lo: f64, hi: f64 },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl TestFunction {
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        TestFunction::Custom(Arc::new(f))
    }

    /// Indicator of the single finite state `s` (states are encoded as `s as f64`).
    pub fn state_indicator(s: usize) -> Self {
        let s = s as f64;
        TestFunction::Indicator {
            lo: s - 0.5,
            hi: s + 0.5,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TestFunction::Identity => x,
            TestFunction::Indicator { lo, hi } => {
                if *lo <= x && x < *hi {
                    1.0
                } else {
                    0.0
                }
            }
            TestFunction::Custom(f) => f(x),
        }
    }

    pub fn eval_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.eval(x)).collect()
    }
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::Identity => write!(f, "Identity"),
            TestFunction::Indicator { lo, hi } => write!(f, "Indicator[{lo}, {hi})"),
            TestFunction::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Draws a standard normal variate.
#[inline]
pub(crate) fn std_normal(rng: &mut SmcRng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}
