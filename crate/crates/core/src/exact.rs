//! Exact Feynman-Kac quantities for finite state spaces.
//!
//! With `S` states the kernel `Q<z>(x, ·) = g<z>(x) M(x, ·)` is the matrix
//! `diag(g<z>) M`, so predictors, filters and the truncated asymptotic
//! variance reduce to dense matrix-vector products. Every chain of products
//! is renormalised at each step; only scale-free ratios are reported.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fk_model::{FeynmanKacModel, SmcRng};
use crate::smc::Lag;

const STOCHASTIC_TOL: f64 = 1e-12;

/// Finite-state model: initial vector, row-stochastic transition matrix and
/// one positive potential vector per observation symbol.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "DiscreteModelDoc", into = "DiscreteModelDoc")]
pub struct DiscreteModel {
    chi: Vec<f64>,
    transition: Vec<Vec<f64>>,
    potentials: BTreeMap<u32, Vec<f64>>,
}

/// JSON layout: `{"chi": [...], "M": [[...], ...], "potentials": {"0": [...], ...}}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiscreteModelDoc {
    chi: Vec<f64>,
    #[serde(rename = "M")]
    transition: Vec<Vec<f64>>,
    potentials: BTreeMap<u32, Vec<f64>>,
}

impl TryFrom<DiscreteModelDoc> for DiscreteModel {
    type Error = Error;
    fn try_from(d: DiscreteModelDoc) -> Result<Self> {
        DiscreteModel::new(d.chi, d.transition, d.potentials)
    }
}

impl From<DiscreteModel> for DiscreteModelDoc {
    fn from(m: DiscreteModel) -> Self {
        DiscreteModelDoc {
            chi: m.chi,
            transition: m.transition,
            potentials: m.potentials,
        }
    }
}

impl DiscreteModel {
    pub fn new(
        chi: Vec<f64>,
        transition: Vec<Vec<f64>>,
        potentials: BTreeMap<u32, Vec<f64>>,
    ) -> Result<Self> {
        let s = chi.len();
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if s < 2 {
            return bad(format!("need at least 2 states, got {s}"));
        }
        if chi.iter().any(|&p| !(p >= 0.0)) || (chi.iter().sum::<f64>() - 1.0).abs() > STOCHASTIC_TOL {
            return bad("chi must be a probability vector".into());
        }
        if transition.len() != s {
            return bad(format!("M has {} rows, expected {s}", transition.len()));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != s {
                return bad(format!("M row {i} has {} entries, expected {s}", row.len()));
            }
            if row.iter().any(|&p| !(p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > STOCHASTIC_TOL {
                return bad(format!("M row {i} is not a probability vector"));
            }
        }
        if potentials.is_empty() {
            return bad("at least one potential vector is required".into());
        }
        for (z, g) in &potentials {
            if g.len() != s {
                return bad(format!("potential {z} has {} entries, expected {s}", g.len()));
            }
            if g.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return bad(format!("potential {z} must be positive and finite"));
            }
        }
        Ok(DiscreteModel {
            chi,
            transition,
            potentials,
        })
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn num_states(&self) -> usize {
        self.chi.len()
    }

    pub fn chi(&self) -> &[f64] {
        &self.chi
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn symbols(&self) -> impl Iterator<Item = u32> + '_ {
        self.potentials.keys().copied()
    }

    /// Potential vector `g<z>`; `z` must be one of the integer symbols.
    pub fn potential_vector(&self, z: f64) -> Result<&[f64]> {
        symbol_of(z)
            .and_then(|k| self.potentials.get(&k))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown observation symbol {z}")))
    }

    /// `(M v)(x) = Σ_y M(x, y) v(y)`.
    fn apply_kernel(&self, v: &[f64]) -> Vec<f64> {
        self.transition
            .iter()
            .map(|row| row.iter().zip(v).map(|(m, x)| m * x).sum())
            .collect()
    }

    /// `(μ M)(y) = Σ_x μ(x) M(x, y)`.
    fn push_measure(&self, mu: &[f64]) -> Vec<f64> {
        let s = self.num_states();
        let mut out = vec![0.0; s];
        for (x, row) in self.transition.iter().enumerate() {
            for (y, m) in row.iter().enumerate() {
                out[y] += mu[x] * m;
            }
        }
        out
    }
}

fn symbol_of(z: f64) -> Option<u32> {
    (z >= 0.0 && z.fract() == 0.0 && z <= u32::MAX as f64).then_some(z as u32)
}

fn sample_index(probs: &[f64], rng: &mut SmcRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// States are carried as `index as f64`.
impl FeynmanKacModel for DiscreteModel {
    fn sample_initial(&self, rng: &mut SmcRng) -> f64 {
        sample_index(&self.chi, rng) as f64
    }

    fn sample_transition(&self, x: f64, rng: &mut SmcRng) -> f64 {
        sample_index(&self.transition[x as usize], rng) as f64
    }

    fn log_potential(&self, z: f64, x: f64) -> f64 {
        match self.potential_vector(z) {
            Ok(g) => g[x as usize].ln(),
            Err(_) => f64::NAN,
        }
    }
}

/// Left fold from `0.0`, so an empty slice sums to `+0.0`.
fn sum(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |a, x| a + x)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalise(v: &mut [f64], what: &str) -> Result<()> {
    let total: f64 = v.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::NumericalUnderflow(format!("{what}: mass {total}")));
    }
    v.iter_mut().for_each(|x| *x /= total);
    Ok(())
}

/// Predictors `η_0 = χ, η_1, …, η_n` for perturbations `z_0..z_{n-1}`.
pub fn predictor_flow(dm: &DiscreteModel, zs: &[f64]) -> Result<Vec<Vec<f64>>> {
    let mut flow = Vec::with_capacity(zs.len() + 1);
    flow.push(dm.chi.clone());
    for (k, &z) in zs.iter().enumerate() {
        let g = dm.potential_vector(z)?;
        let prev = flow.last().expect("non-empty");
        let weighted: Vec<f64> = prev.iter().zip(g).map(|(p, g)| p * g).collect();
        let mut next = dm.push_measure(&weighted);
        normalise(&mut next, &format!("predictor at time {}", k + 1))?;
        flow.push(next);
    }
    Ok(flow)
}

/// Predictor `η_n` given `z_0..z_{n-1}`.
pub fn exact_predictor(dm: &DiscreteModel, zs: &[f64]) -> Result<Vec<f64>> {
    Ok(predictor_flow(dm, zs)?.pop().expect("non-empty"))
}

/// Filter `φ_n ∝ η_n ⊙ g<z_n>` given `z_0..z_n`.
pub fn exact_filter(dm: &DiscreteModel, zs: &[f64]) -> Result<Vec<f64>> {
    let (&last, head) = zs
        .split_last()
        .ok_or_else(|| Error::InvalidConfig("the filter needs at least one perturbation".into()))?;
    let eta = exact_predictor(dm, head)?;
    let g = dm.potential_vector(last)?;
    let mut phi: Vec<f64> = eta.iter().zip(g).map(|(e, g)| e * g).collect();
    normalise(&mut phi, "filter")?;
    Ok(phi)
}

/// Truncated asymptotic variance and its summands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactVariance {
    pub value: f64,
    pub ell: usize,
    /// Summands for `m = ell..=n`, in that order.
    pub terms: Vec<f64>,
}

/// All summands `m = 0..=n` of the asymptotic variance of `η_n^N h`:
/// `η_m (Q_{m:n-1} f)² / (η_m Q_{m:n-1} 1)²` with `f = h - η_n h`.
fn variance_terms(dm: &DiscreteModel, zs: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    if h.len() != dm.num_states() {
        return Err(Error::InvalidConfig(format!(
            "test function has {} entries, model has {} states",
            h.len(),
            dm.num_states()
        )));
    }
    let n = zs.len();
    let flow = predictor_flow(dm, zs)?;
    let eta_n_h = dot(&flow[n], h);
    let mut f: Vec<f64> = h.iter().map(|x| x - eta_n_h).collect();
    let mut one = vec![1.0; dm.num_states()];

    let mut terms = vec![0.0; n + 1];
    for m in (0..=n).rev() {
        if m < n {
            let g = dm.potential_vector(zs[m])?;
            f = dm.apply_kernel(&f).iter().zip(g).map(|(v, g)| v * g).collect();
            one = dm.apply_kernel(&one).iter().zip(g).map(|(v, g)| v * g).collect();
            let scale = one.iter().cloned().fold(0.0, f64::max);
            if !(scale > 0.0) || !scale.is_finite() {
                return Err(Error::NumericalUnderflow(format!("backward kernel at time {m}")));
            }
            f.iter_mut().for_each(|v| *v /= scale);
            one.iter_mut().for_each(|v| *v /= scale);
        }
        let eta = &flow[m];
        let num: f64 = eta.iter().zip(&f).map(|(e, v)| e * v * v).sum();
        let den = dot(eta, &one);
        terms[m] = num / (den * den);
    }
    Ok(terms)
}

/// Truncated asymptotic variance of the predictor approximation at time
/// `n = zs.len()`, keeping the summands `m = ell..=n`.
pub fn exact_asymptotic_variance(
    dm: &DiscreteModel,
    zs: &[f64],
    h: &[f64],
    ell: usize,
) -> Result<ExactVariance> {
    let n = zs.len();
    if ell > n {
        return Err(Error::IndexOutOfRange { index: ell, lo: 0, hi: n });
    }
    let all = variance_terms(dm, zs, h)?;
    let terms = all[ell..].to_vec();
    Ok(ExactVariance {
        value: sum(&terms),
        ell,
        terms,
    })
}

/// `g<z_n> (h - φ_n h)` and `η_n g<z_n>`, the ingredients of the filter-flow variance.
fn filter_transform(dm: &DiscreteModel, zs: &[f64], h: &[f64]) -> Result<(Vec<f64>, f64)> {
    let (&last, head) = zs
        .split_last()
        .ok_or_else(|| Error::InvalidConfig("the filter needs at least one perturbation".into()))?;
    let phi = exact_filter(dm, zs)?;
    let eta = exact_predictor(dm, head)?;
    let g = dm.potential_vector(last)?;
    let phi_h = dot(&phi, h);
    let transformed = g.iter().zip(h).map(|(g, h)| g * (h - phi_h)).collect();
    Ok((transformed, dot(&eta, g)))
}

/// Truncated asymptotic variance of the filter approximation at time
/// `n = zs.len() - 1`: the predictor variance at `n` of `g<z_n>(h - φ_n h)`
/// divided by `(η_n g<z_n>)²`.
pub fn exact_filter_variance(
    dm: &DiscreteModel,
    zs: &[f64],
    h: &[f64],
    ell: usize,
) -> Result<ExactVariance> {
    if h.len() != dm.num_states() {
        return Err(Error::InvalidConfig("test function length mismatch".into()));
    }
    let n = zs.len().saturating_sub(1);
    if zs.is_empty() || ell > n {
        return Err(Error::IndexOutOfRange { index: ell, lo: 0, hi: n });
    }
    let (transformed, norm) = filter_transform(dm, zs, h)?;
    let base = exact_asymptotic_variance(dm, &zs[..n], &transformed, ell)?;
    let scale = 1.0 / (norm * norm);
    let terms: Vec<f64> = base.terms.iter().map(|t| t * scale).collect();
    Ok(ExactVariance {
        value: sum(&terms),
        ell,
        terms,
    })
}

/// Asymptotic bias of the fixed-lag predictor estimator,
/// `σ²<0> - σ²<(n - lag) ∨ 0>`, summed from the dropped terms so it is
/// exactly nonnegative.
pub fn exact_bias(dm: &DiscreteModel, zs: &[f64], h: &[f64], lag: Lag) -> Result<f64> {
    let root = lag.root(zs.len());
    let terms = variance_terms(dm, zs, h)?;
    Ok(sum(&terms[..root]))
}

/// Same as [`exact_bias`] for the filter-flow variance at `n = zs.len() - 1`.
pub fn exact_filter_bias(dm: &DiscreteModel, zs: &[f64], h: &[f64], lag: Lag) -> Result<f64> {
    let full = exact_filter_variance(dm, zs, h, 0)?;
    let root = lag.root(zs.len() - 1);
    Ok(sum(&full.terms[..root]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(g: [f64; 2]) -> DiscreteModel {
        DiscreteModel::new(
            vec![0.5, 0.5],
            vec![vec![0.7, 0.3], vec![0.4, 0.6]],
            BTreeMap::from([(0, g.to_vec())]),
        )
        .unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn empty_sequence_predictor_is_chi() {
        let dm = two_state([1.0, 2.0]);
        assert_eq!(exact_predictor(&dm, &[]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn one_step_predictor_by_hand() {
        // (.5·1, .5·2) M = (.5·.7 + 1·.4, .5·.3 + 1·.6) = (.75, .75) → (.5, .5).
        let dm = DiscreteModel::new(
            vec![0.5, 0.5],
            vec![vec![0.7, 0.3], vec![0.4, 0.6]],
            BTreeMap::from([(0, vec![1.0, 2.0])]),
        )
        .unwrap();
        let eta = exact_predictor(&dm, &[0.0]).unwrap();
        assert!(close(eta[0], 0.5, 1e-15) && close(eta[1], 0.5, 1e-15));

        // chi = (.2, .8): (.2, 1.6) M = (.14 + .64, .06 + .96) = (.78, 1.02) / 1.8.
        let dm = DiscreteModel::new(
            vec![0.2, 0.8],
            vec![vec![0.7, 0.3], vec![0.4, 0.6]],
            BTreeMap::from([(0, vec![1.0, 2.0])]),
        )
        .unwrap();
        let eta = exact_predictor(&dm, &[0.0]).unwrap();
        assert!(close(eta[0], 0.78 / 1.8, 1e-14));
        assert!(close(eta[1], 1.02 / 1.8, 1e-14));
    }

    #[test]
    fn unit_potentials_give_markov_marginal() {
        let dm = two_state([1.0, 1.0]);
        let mut mu = dm.chi().to_vec();
        for _ in 0..5 {
            mu = dm.push_measure(&mu);
        }
        let eta = exact_predictor(&dm, &[0.0; 5]).unwrap();
        for (a, b) in eta.iter().zip(&mu) {
            assert!(close(*a, *b, 1e-14));
        }
    }

    #[test]
    fn filter_with_constant_potential_is_predictor() {
        let dm = DiscreteModel::new(
            vec![0.3, 0.7],
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            BTreeMap::from([(0, vec![1.0, 4.0]), (1, vec![2.0, 2.0])]),
        )
        .unwrap();
        let phi = exact_filter(&dm, &[0.0, 0.0, 1.0]).unwrap();
        let eta = exact_predictor(&dm, &[0.0, 0.0]).unwrap();
        for (a, b) in phi.iter().zip(&eta) {
            assert!(close(*a, *b, 1e-14));
        }
    }

    #[test]
    fn dominant_potential_concentrates_filter() {
        let dm = two_state([1.0, 1e6]);
        let phi = exact_filter(&dm, &[0.0, 0.0]).unwrap();
        assert!(phi[1] > 1.0 - 1e-5);
    }

    #[test]
    fn iid_case_variance() {
        let dm = two_state([1.0, 2.0]);
        let v = exact_asymptotic_variance(&dm, &[], &[0.0, 1.0], 0).unwrap();
        assert!(close(v.value, 0.25, 1e-15));
        assert_eq!(v.terms.len(), 1);
    }

    #[test]
    fn last_term_is_predictor_variance() {
        let dm = two_state([1.0, 3.0]);
        let zs = [0.0; 4];
        let h = [2.0, -1.0];
        let v = exact_asymptotic_variance(&dm, &zs, &h, 4).unwrap();
        let eta = exact_predictor(&dm, &zs).unwrap();
        let mean = dot(&eta, &h);
        let var: f64 = eta.iter().zip(&h).map(|(e, x)| e * (x - mean).powi(2)).sum();
        assert!(close(v.value, var, 1e-14));
    }

    #[test]
    fn truncation_out_of_range() {
        let dm = two_state([1.0, 3.0]);
        assert!(matches!(
            exact_asymptotic_variance(&dm, &[0.0; 2], &[0.0, 1.0], 3),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn variance_non_increasing_in_ell_and_bias_nonnegative() {
        let dm = two_state([0.5, 2.0]);
        let zs = [0.0; 7];
        let h = [1.0, 0.0];
        let mut prev = f64::INFINITY;
        for ell in 0..=7 {
            let v = exact_asymptotic_variance(&dm, &zs, &h, ell).unwrap();
            assert!(v.value <= prev);
            assert!(v.terms.iter().all(|&t| t >= 0.0));
            prev = v.value;
        }
        for lag in 0..10 {
            let b = exact_bias(&dm, &zs, &h, Lag::Finite(lag)).unwrap();
            assert!(b >= 0.0);
            if lag >= 7 {
                assert_eq!(b, 0.0);
            }
        }
        let full = exact_asymptotic_variance(&dm, &zs, &h, 0).unwrap().value;
        let last = exact_asymptotic_variance(&dm, &zs, &h, 7).unwrap().value;
        let b0 = exact_bias(&dm, &zs, &h, Lag::Finite(0)).unwrap();
        assert!(close(b0, full - last, 1e-12));
    }

    #[test]
    fn filter_variance_of_constant_is_zero() {
        let dm = two_state([0.5, 2.0]);
        let v = exact_filter_variance(&dm, &[0.0; 4], &[3.0, 3.0], 0).unwrap();
        assert!(v.value.abs() < 1e-28);
    }

    #[test]
    fn constant_potential_filter_variance_reduces_to_predictor() {
        let dm = DiscreteModel::new(
            vec![0.3, 0.7],
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            BTreeMap::from([(0, vec![1.0, 4.0]), (1, vec![2.0, 2.0])]),
        )
        .unwrap();
        let h = [1.5, -0.5];
        let zs = [0.0, 0.0, 0.0, 1.0];
        for ell in 0..=3 {
            let filt = exact_filter_variance(&dm, &zs, &h, ell).unwrap();
            let pred = exact_asymptotic_variance(&dm, &zs[..3], &h, ell).unwrap();
            assert!(close(filt.value, pred.value, 1e-12));
        }
    }

    #[test]
    fn long_sequence_stays_finite() {
        let dm = two_state([1e-30, 1e-25]);
        let zs = vec![0.0; 400];
        let v = exact_asymptotic_variance(&dm, &zs, &[0.0, 1.0], 0).unwrap();
        assert!(v.value.is_finite() && v.value > 0.0);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let text = r#"{"chi": [0.5, 0.5], "M": [[0.7, 0.3], [0.4, 0.6]],
                       "potentials": {"0": [1.0, 0.3], "1": [0.4, 1.5]}}"#;
        let dm: DiscreteModel = serde_json::from_str(text).unwrap();
        assert_eq!(dm.potential_vector(1.0).unwrap(), &[0.4, 1.5]);
        assert!(dm.potential_vector(2.0).is_err());
        assert!(dm.potential_vector(0.5).is_err());
        let back: DiscreteModel = serde_json::from_str(&serde_json::to_string(&dm).unwrap()).unwrap();
        assert_eq!(back.transition(), dm.transition());

        let bad_row = r#"{"chi": [0.5, 0.5], "M": [[0.7, 0.2], [0.4, 0.6]], "potentials": {"0": [1, 1]}}"#;
        assert!(serde_json::from_str::<DiscreteModel>(bad_row).is_err());
        let bad_pot = r#"{"chi": [0.5, 0.5], "M": [[0.7, 0.3], [0.4, 0.6]], "potentials": {"0": [1, 0]}}"#;
        assert!(serde_json::from_str::<DiscreteModel>(bad_pot).is_err());
        let extra = r#"{"chi": [0.5, 0.5], "M": [[0.7, 0.3], [0.4, 0.6]], "potentials": {"0": [1, 1]}, "x": 1}"#;
        assert!(serde_json::from_str::<DiscreteModel>(extra).is_err());
    }
}
