//! Asymptotic-variance estimators computed from a single filter run.
//!
//! All estimators group the particles by an ancestor index (Eve indices for
//! the full-tracing estimator, Enoch indices at `(n - lag) ∨ 0` for the
//! fixed-lag one), sum centred test-function values inside each group and
//! average the squared group sums. Accumulation runs in ascending particle
//! index so identical filter states give bitwise-identical estimates.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::fk_model::{FeynmanKacModel, TestFunction};
use crate::smc::{Lag, ParticleFilter};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flow {
    /// Unweighted particle measure, targeting the predictor.
    Predictor,
    /// Weighted particle measure, targeting the updated (filter) law.
    Filter,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    FixedLag,
    /// Full genealogical tracing through the Eve indices.
    Cle,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub value: f64,
    pub time_n: usize,
    pub lag: Lag,
    pub flow: Flow,
    pub estimator: EstimatorKind,
}

/// `(1/N) Σ_i ( Σ_{j: groups[j] = i} values[j] )²`.
///
/// `values` must already be centred; `groups[j] < values.len()`.
///
/// When every particle shares one group the result is exactly 0: centred
/// values sum to zero, and rounding residue is not reported as variance.
pub fn grouped_sum_of_squares(values: &[f64], groups: &[usize]) -> f64 {
    debug_assert_eq!(values.len(), groups.len());
    let n = values.len();
    if groups.windows(2).all(|w| w[0] == w[1]) {
        return 0.0;
    }
    let mut sums = vec![0.0; n];
    for (&v, &g) in values.iter().zip(groups) {
        sums[g] += v;
    }
    sums.iter().map(|s| s * s).sum::<f64>() / n as f64
}

/// Predictor-flow estimator on explicit data: centres `h_values` at their mean
/// and groups by `groups`.
pub fn predictor_variance_from(h_values: &[f64], groups: &[usize]) -> f64 {
    let mean = h_values.iter().sum::<f64>() / h_values.len() as f64;
    let centred: Vec<f64> = h_values.iter().map(|&v| v - mean).collect();
    grouped_sum_of_squares(&centred, groups)
}

/// Filter-flow estimator, weighted form:
/// `N Σ_i ( Σ_{j: groups[j] = i} (w_j / Σw) (h_j - φh) )²`.
pub fn filter_variance_weighted_from(h_values: &[f64], weights: &[f64], groups: &[usize]) -> f64 {
    let n = h_values.len();
    let total: f64 = weights.iter().sum();
    let phi = weights.iter().zip(h_values).map(|(w, h)| w * h).sum::<f64>() / total;
    let terms: Vec<f64> = weights
        .iter()
        .zip(h_values)
        .map(|(w, h)| (w / total) * (h - phi))
        .collect();
    (n * n) as f64 * grouped_sum_of_squares(&terms, groups)
}

/// Filter-flow estimator, ratio form: the predictor-flow estimator applied to
/// `g (h - φh)` divided by `(η^N g)²`.
pub fn filter_variance_ratio_from(h_values: &[f64], weights: &[f64], groups: &[usize]) -> f64 {
    let n = h_values.len() as f64;
    let total: f64 = weights.iter().sum();
    let phi = weights.iter().zip(h_values).map(|(w, h)| w * h).sum::<f64>() / total;
    let transformed: Vec<f64> = weights.iter().zip(h_values).map(|(w, h)| w * (h - phi)).collect();
    let mean_g = total / n;
    predictor_variance_from(&transformed, groups) / (mean_g * mean_g)
}

fn kind_of(lag: Lag) -> EstimatorKind {
    match lag {
        Lag::Full => EstimatorKind::Cle,
        Lag::Finite(_) => EstimatorKind::FixedLag,
    }
}

/// Fixed-lag predictor-flow estimate at the filter's own lag.
pub fn fixed_lag_predictor_variance<M: FeynmanKacModel + ?Sized>(
    pf: &ParticleFilter<'_, M>,
    h: &TestFunction,
) -> VarianceEstimate {
    predictor_variance_at_lag(pf, h, pf.lag())
        .expect("the filter's own tracing root is always in its window")
}

/// Predictor-flow estimate at any lag up to the filter's window; `Lag::Full`
/// gives the Eve-index estimator.
pub fn predictor_variance_at_lag<M: FeynmanKacModel + ?Sized>(
    pf: &ParticleFilter<'_, M>,
    h: &TestFunction,
    lag: Lag,
) -> Result<VarianceEstimate> {
    let groups = pf.ancestors_at_lag(lag)?;
    let values = h.eval_all(pf.positions());
    Ok(VarianceEstimate {
        value: predictor_variance_from(&values, groups),
        time_n: pf.time(),
        lag,
        flow: Flow::Predictor,
        estimator: kind_of(lag),
    })
}

/// Full-tracing (Eve-index) predictor-flow estimate.
pub fn cle_predictor_variance<M: FeynmanKacModel + ?Sized>(
    pf: &ParticleFilter<'_, M>,
    h: &TestFunction,
) -> VarianceEstimate {
    predictor_variance_at_lag(pf, h, Lag::Full).expect("Eve indices are always available")
}

/// Fixed-lag filter-flow estimate (weighted form) at the filter's lag. Needs
/// the weights for `z_n`.
pub fn fixed_lag_filter_variance<M: FeynmanKacModel + ?Sized>(
    pf: &ParticleFilter<'_, M>,
    h: &TestFunction,
) -> Result<VarianceEstimate> {
    filter_variance_at_lag(pf, h, pf.lag())
}

pub fn filter_variance_at_lag<M: FeynmanKacModel + ?Sized>(
    pf: &ParticleFilter<'_, M>,
    h: &TestFunction,
    lag: Lag,
) -> Result<VarianceEstimate> {
    let weights = pf.weights().ok_or(Error::WeightsUnavailable)?;
    let groups = pf.ancestors_at_lag(lag)?;
    let values = h.eval_all(pf.positions());
    Ok(VarianceEstimate {
        value: filter_variance_weighted_from(&values, weights, groups),
        time_n: pf.time(),
        lag,
        flow: Flow::Filter,
        estimator: kind_of(lag),
    })
}

/// Ratio-form evaluation of the same filter-flow estimate.
pub fn fixed_lag_filter_variance_ratio<M: FeynmanKacModel + ?Sized>(
    pf: &ParticleFilter<'_, M>,
    h: &TestFunction,
) -> Result<VarianceEstimate> {
    let weights = pf.weights().ok_or(Error::WeightsUnavailable)?;
    let lag = pf.lag();
    let groups = pf.ancestors_at_lag(lag)?;
    let values = h.eval_all(pf.positions());
    Ok(VarianceEstimate {
        value: filter_variance_ratio_from(&values, weights, groups),
        time_n: pf.time(),
        lag,
        flow: Flow::Filter,
        estimator: kind_of(lag),
    })
}

/// Quantile family used for confidence intervals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum QuantileFamily {
    #[default]
    Gaussian,
    /// Student's t with `dof` degrees of freedom; wider than Gaussian, which
    /// hedges against variance underestimation.
    StudentT { dof: f64 },
}

/// Standard normal quantile; `±inf` at the ends of `[0, 1]`.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    Normal::standard().inverse_cdf(p)
}

/// Two-sided critical value for coverage `level`.
pub fn critical_value(level: f64, family: QuantileFamily) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    let upper = 0.5 + level / 2.0;
    match family {
        QuantileFamily::Gaussian => Ok(normal_quantile(upper)),
        QuantileFamily::StudentT { dof } => {
            let t = StudentsT::new(0.0, 1.0, dof)
                .map_err(|e| Error::InvalidConfig(format!("Student-t dof {dof}: {e}")))?;
            Ok(t.inverse_cdf(upper))
        }
    }
}

/// `mean ± q √(variance / N)`.
pub fn confidence_interval(
    mean: f64,
    variance: f64,
    particles: usize,
    level: f64,
    family: QuantileFamily,
) -> Result<(f64, f64)> {
    let q = critical_value(level, family)?;
    let half = q * (variance / particles as f64).sqrt();
    Ok((mean - half, mean + half))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_particle_hand_values() {
        // h = (1, 3), mean 2: distinct groups give ((−1)² + 1²)/2 = 1.
        assert_eq!(predictor_variance_from(&[1.0, 3.0], &[0, 1]), 1.0);
        // Single group: (−1 + 1)² / 2 = 0.
        assert_eq!(predictor_variance_from(&[1.0, 3.0], &[0, 0]), 0.0);
    }

    #[test]
    fn constant_h_gives_zero() {
        assert_eq!(predictor_variance_from(&[2.5; 6], &[0, 0, 1, 3, 3, 5]), 0.0);
        let w = [0.1, 0.7, 0.2, 1.0, 0.4, 0.9];
        assert!(filter_variance_weighted_from(&[2.5; 6], &w, &[0, 1, 2, 3, 4, 5]).abs() < 1e-28);
    }

    #[test]
    fn single_group_is_exactly_zero() {
        let h = [0.1, 0.7, 0.2, 1.3];
        let w = [0.3, 1.0, 0.6, 0.2];
        assert_eq!(predictor_variance_from(&h, &[2; 4]), 0.0);
        assert_eq!(filter_variance_weighted_from(&h, &w, &[1; 4]), 0.0);
        assert_eq!(filter_variance_ratio_from(&h, &w, &[0; 4]), 0.0);
    }

    #[test]
    fn filter_weighted_hand_value() {
        // Normalised weights (.75, .25), h = (0, 4): φh = 1,
        // terms (.75·(0−1))² + (.25·(4−1))² = 1.125, times N = 2 gives 2.25.
        let v = filter_variance_weighted_from(&[0.0, 4.0], &[3.0, 1.0], &[0, 1]);
        assert!((v - 2.25).abs() < 1e-14, "{v}");
        let r = filter_variance_ratio_from(&[0.0, 4.0], &[3.0, 1.0], &[0, 1]);
        assert!((r - 2.25).abs() < 1e-14, "{r}");
    }

    #[test]
    fn quantiles() {
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((normal_quantile(0.5)).abs() < 1e-15);
        assert!((normal_quantile(0.01) + 2.326_347_874_040_841).abs() < 1e-12);
        assert!((normal_quantile(0.999_99) - 4.264_890_793_923_841).abs() < 1e-10);
        let z = critical_value(0.95, QuantileFamily::Gaussian).unwrap();
        let t = critical_value(0.95, QuantileFamily::StudentT { dof: 10.0 }).unwrap();
        assert!((t - 2.228_138_851_964_938).abs() < 1e-8);
        assert!(t > z);
    }

    #[test]
    fn interval_arithmetic() {
        let (lo, hi) = confidence_interval(0.0, 1.0, 4000, 0.95, QuantileFamily::Gaussian).unwrap();
        assert!((hi - 0.030_989_75).abs() < 1e-6, "{hi}");
        assert!((lo + hi).abs() < 1e-15);
        let (lo, hi) = confidence_interval(3.0, 0.0, 10, 0.95, QuantileFamily::Gaussian).unwrap();
        assert_eq!((lo, hi), (3.0, 3.0));
        for bad in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(matches!(
                confidence_interval(0.0, 1.0, 10, bad, QuantileFamily::Gaussian),
                Err(Error::InvalidLevel(_))
            ));
        }
    }
}
