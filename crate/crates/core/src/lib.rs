//! Online fixed-lag estimation of the asymptotic variance of particle filters.
//!
//! The bootstrap filter in [`smc`] keeps, next to its particles, the Eve
//! indices (time-0 ancestors) and a sliding window of Enoch indices (ancestors
//! `lag` generations back). [`variance`] turns either into a variance
//! estimate for the particle mean of a test function, in a single run and
//! with memory `O(lag · N)`. [`exact`] computes the same asymptotic variances
//! by matrix algebra for finite-state models, and [`experiments`] replicates
//! filters to compare the two.
//!
//! ```
//! use pfvar::{models, smc::{Lag, ParticleFilter}, variance, TestFunction};
//!
//! let sv = models::make_stochastic_volatility(models::StochasticVolatilityParams::REFERENCE)?;
//! let ys = models::simulate(models::StochasticVolatilityParams::REFERENCE.into(), 50, 1)?.observations;
//!
//! let mut pf = ParticleFilter::new(&sv, 500, Lag::Finite(20), 42)?;
//! for &y in &ys {
//!     pf.step(y)?;
//! }
//! let est = variance::fixed_lag_predictor_variance(&pf, &TestFunction::Identity);
//! assert!(est.value >= 0.0);
//! # Ok::<(), pfvar::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod exact;
pub mod experiments;
pub mod fk_model;
pub mod io;
pub mod models;
pub mod seed;
pub mod smc;
pub mod variance;

pub use error::{Error, Result};
pub use exact::{DiscreteModel, ExactVariance};
pub use experiments::{ExperimentConfig, ModelConfig};
pub use fk_model::{potential, FeynmanKacModel, SmcRng, TestFunction};
pub use smc::{AncestorLevel, Lag, ParticleFilter};
pub use variance::{Flow, VarianceEstimate};
