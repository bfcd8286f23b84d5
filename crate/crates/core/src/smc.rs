//! Bootstrap particle filter with online genealogy tracking.
//!
//! Each step weights the current particles by `g<z_n>`, draws `N` ancestor
//! indices i.i.d. from the normalised weights (multinomial resampling, every
//! step) and mutates through the transition kernel. Alongside the particles
//! the filter keeps
//!
//! * the Eve indices: the time-0 ancestor of every particle, and
//! * a window of Enoch indices: for every time `m` in `(n - lag) ∨ 0 ..= n`
//!   the index of the time-`m` ancestor of every particle.
//!
//! The window holds at most `lag + 1` rows of `N` indices, so its memory does
//! not grow with `n`. Indices are 0-based.

use std::collections::VecDeque;
use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use rand::Rng;

use crate::error::{Error, Result};
use crate::fk_model::{checked_log_potential, FeynmanKacModel, SmcRng, TestFunction};
use crate::seed::rng_from_seed;

/// Number of generations traced backwards by the variance estimator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Lag {
    Finite(usize),
    /// Trace all the way back to time 0 (the Eve indices).
    Full,
}

impl Lag {
    /// Tracing root `(n - lag) ∨ 0`.
    pub fn root(self, n: usize) -> usize {
        match self {
            Lag::Finite(l) => n.saturating_sub(l),
            Lag::Full => 0,
        }
    }

    pub fn is_full(self) -> bool {
        matches!(self, Lag::Full)
    }
}

impl fmt::Display for Lag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lag::Finite(l) => write!(f, "{l}"),
            Lag::Full => write!(f, "inf"),
        }
    }
}

impl From<usize> for Lag {
    fn from(l: usize) -> Self {
        Lag::Finite(l)
    }
}

impl Serialize for Lag {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Lag::Finite(l) => s.serialize_u64(*l as u64),
            Lag::Full => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Lag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct LagVisitor;

        impl Visitor<'_> for LagVisitor {
            type Value = Lag;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a non-negative integer lag or \"inf\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Lag, E> {
                Ok(Lag::Finite(v as usize))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Lag, E> {
                usize::try_from(v)
                    .map(Lag::Finite)
                    .map_err(|_| E::custom(format!("lag must be non-negative, got {v}")))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Lag, E> {
                match v.trim().to_ascii_lowercase().as_str() {
                    "inf" | "infinity" | "full" | "cle" => Ok(Lag::Full),
                    other => other
                        .parse::<usize>()
                        .map(Lag::Finite)
                        .map_err(|_| E::custom(format!("unrecognised lag {v:?}"))),
                }
            }
        }

        d.deserialize_any(LagVisitor)
    }
}

/// Genealogy level queried by [`ParticleFilter::unique_ancestor_count`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AncestorLevel {
    /// Time-0 ancestors.
    Eve,
    /// Ancestors at time `m`; the row must be inside the window.
    Time(usize),
}

/// Resamples `count` indices i.i.d. from the categorical law proportional to
/// `weights` by inverse-CDF lookup: for `u` uniform on `(0, Σw]`, the result is
/// the smallest `l` with cumulative weight `>= u`.
pub fn resample_categorical(weights: &[f64], count: usize, rng: &mut SmcRng) -> Result<Vec<usize>> {
    let mut out = vec![0; count];
    let mut cumulative = Vec::with_capacity(weights.len());
    resample_into(weights, &mut out, &mut cumulative, rng)?;
    Ok(out)
}

fn resample_into(
    weights: &[f64],
    out: &mut [usize],
    cumulative: &mut Vec<f64>,
    rng: &mut SmcRng,
) -> Result<()> {
    cumulative.clear();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        if !(w >= 0.0) || w.is_infinite() {
            return Err(Error::DegenerateWeights(format!("weight {i} is {w}")));
        }
        acc += w;
        cumulative.push(acc);
    }
    if !(acc > 0.0) || !acc.is_finite() {
        return Err(Error::DegenerateWeights(format!("weight sum is {acc}")));
    }
    for slot in out.iter_mut() {
        // 1 - U with U in [0, 1) lies in (0, 1], so zero-weight prefixes are never hit.
        let u = (1.0 - rng.random::<f64>()) * acc;
        *slot = cumulative.partition_point(|&c| c < u).min(weights.len() - 1);
    }
    Ok(())
}

/// Weights `ω_n^i` of the current particles for perturbation `z_n`, stored
/// after subtracting the maximum log-potential.
#[derive(Clone, Debug)]
struct Weights {
    values: Vec<f64>,
    sum: f64,
    max_log: f64,
    z: f64,
}

/// Particle cloud plus Eve indices and the lag window of Enoch indices.
pub struct ParticleFilter<'m, M: ?Sized> {
    model: &'m M,
    n: usize,
    lag: Lag,
    positions: Vec<f64>,
    weights: Option<Weights>,
    /// Row `k` holds the Enoch indices for time `window_start + k`.
    window: VecDeque<Vec<usize>>,
    window_start: usize,
    eve: Vec<usize>,
    ancestors: Vec<usize>,
    cumulative: Vec<f64>,
    rng: SmcRng,
}

impl<'m, M: FeynmanKacModel + ?Sized> ParticleFilter<'m, M> {
    /// Draws `N` particles from the initial law; Eve and window rows start as
    /// the identity.
    pub fn new(model: &'m M, particles: usize, lag: Lag, seed: u64) -> Result<Self> {
        Self::with_rng(model, particles, lag, rng_from_seed(seed))
    }

    pub fn with_rng(model: &'m M, particles: usize, lag: Lag, mut rng: SmcRng) -> Result<Self> {
        if particles == 0 {
            return Err(Error::InvalidConfig("particle count N must be at least 1".into()));
        }
        let positions = (0..particles).map(|_| model.sample_initial(&mut rng)).collect();
        let identity: Vec<usize> = (0..particles).collect();
        Ok(ParticleFilter {
            model,
            n: 0,
            lag,
            positions,
            weights: None,
            window: VecDeque::from([identity.clone()]),
            window_start: 0,
            eve: identity,
            ancestors: Vec::new(),
            cumulative: Vec::with_capacity(particles),
            rng,
        })
    }

    pub fn model(&self) -> &'m M {
        self.model
    }

    /// Current time `n`; the particles target the predictor given `z_0..z_{n-1}`.
    pub fn time(&self) -> usize {
        self.n
    }

    pub fn num_particles(&self) -> usize {
        self.positions.len()
    }

    pub fn lag(&self) -> Lag {
        self.lag
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn eve(&self) -> &[usize] {
        &self.eve
    }

    /// Ancestor indices drawn in the most recent propagation (empty at time 0).
    pub fn last_ancestors(&self) -> &[usize] {
        &self.ancestors
    }

    /// Weights of the current particles, if [`reweight`](Self::reweight) has
    /// been called since the last propagation. Scaled so the largest is 1.
    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_ref().map(|w| w.values.as_slice())
    }

    pub fn weight_sum(&self) -> Option<f64> {
        self.weights.as_ref().map(|w| w.sum)
    }

    /// Perturbation the current weights were computed for.
    pub fn weighted_for(&self) -> Option<f64> {
        self.weights.as_ref().map(|w| w.z)
    }

    /// Log of the factor the stored weights were divided by.
    pub fn weight_log_offset(&self) -> Option<f64> {
        self.weights.as_ref().map(|w| w.max_log)
    }

    /// Oldest time held in the window: `(n - lag) ∨ 0`, or `n` for
    /// [`Lag::Full`], whose time-0 ancestry lives in the Eve indices.
    pub fn window_start(&self) -> usize {
        self.window_start
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    /// Window rows paired with their time index, oldest first.
    pub fn window_rows(&self) -> impl Iterator<Item = (usize, &[usize])> + '_ {
        self.window
            .iter()
            .enumerate()
            .map(move |(k, row)| (self.window_start + k, row.as_slice()))
    }

    /// Enoch indices `E_{m,n}`: the time-`m` ancestor of every particle.
    pub fn enoch_row(&self, m: usize) -> Result<&[usize]> {
        let newest = self.window_start + self.window.len() - 1;
        if m < self.window_start || m > newest {
            return Err(Error::RowNotInWindow {
                row: m,
                oldest: self.window_start,
                newest,
            });
        }
        Ok(&self.window[m - self.window_start])
    }

    /// Ancestor indices used by the estimator at lag `lag`: the Eve indices for
    /// [`Lag::Full`], otherwise the row at `(n - lag) ∨ 0`.
    pub fn ancestors_at_lag(&self, lag: Lag) -> Result<&[usize]> {
        match lag {
            Lag::Full => Ok(&self.eve),
            Lag::Finite(_) => self.enoch_row(lag.root(self.n)),
        }
    }

    /// Index slots held by the genealogy (window rows plus Eve indices).
    pub fn genealogy_slots(&self) -> usize {
        self.window.iter().map(Vec::len).sum::<usize>() + self.eve.len()
    }

    /// Computes `ω_n^i = g<z>(ξ_n^i)` in log domain, shifted by the maximum.
    pub fn reweight(&mut self, z: f64) -> Result<()> {
        let mut values = Vec::with_capacity(self.positions.len());
        let mut max_log = f64::NEG_INFINITY;
        for &x in &self.positions {
            let lp = checked_log_potential(self.model, z, x)?;
            max_log = max_log.max(lp);
            values.push(lp);
        }
        if max_log == f64::NEG_INFINITY {
            return Err(Error::DegenerateWeights(format!(
                "every particle has zero potential at z = {z}"
            )));
        }
        let mut sum = 0.0;
        for v in values.iter_mut() {
            *v = (*v - max_log).exp();
            sum += *v;
        }
        self.weights = Some(Weights {
            values,
            sum,
            max_log,
            z,
        });
        Ok(())
    }

    /// Selection and mutation using the weights from the last `reweight`,
    /// followed by the Eve/Enoch index update. Advances time by one.
    pub fn propagate(&mut self) -> Result<()> {
        let weights = self.weights.take().ok_or(Error::WeightsUnavailable)?;
        let n_particles = self.positions.len();
        self.ancestors.resize(n_particles, 0);
        resample_into(
            &weights.values,
            &mut self.ancestors,
            &mut self.cumulative,
            &mut self.rng,
        )?;

        let old = std::mem::take(&mut self.positions);
        self.positions = self
            .ancestors
            .iter()
            .map(|&a| self.model.sample_transition(old[a], &mut self.rng))
            .collect();

        let next = self.n + 1;
        let new_root = window_root(self.lag, next);
        // Recycle the dropped row as scratch so the window never holds more
        // than lag + 1 rows.
        let mut spare = if self.window_start < new_root {
            self.window_start += 1;
            self.window.pop_front().expect("window is never empty")
        } else {
            vec![0; n_particles]
        };
        let anc = &self.ancestors;
        for row in self.window.iter_mut() {
            for (s, &a) in spare.iter_mut().zip(anc) {
                *s = row[a];
            }
            std::mem::swap(row, &mut spare);
        }
        for (s, &a) in spare.iter_mut().zip(anc) {
            *s = self.eve[a];
        }
        std::mem::swap(&mut self.eve, &mut spare);
        for (i, s) in spare.iter_mut().enumerate() {
            *s = i;
        }
        self.window.push_back(spare);
        debug_assert_eq!(self.window_start, new_root);

        self.n = next;
        Ok(())
    }

    /// One full update with perturbation `z`: reweight then propagate.
    pub fn step(&mut self, z: f64) -> Result<()> {
        self.reweight(z)?;
        self.propagate()
    }

    /// Unweighted particle mean `η_n^N h`.
    pub fn predictor_estimate(&self, h: &TestFunction) -> f64 {
        let sum: f64 = self.positions.iter().map(|&x| h.eval(x)).sum();
        sum / self.positions.len() as f64
    }

    /// Weighted particle mean `φ_n^N h`; needs the weights for `z_n`.
    pub fn filter_estimate(&self, h: &TestFunction) -> Result<f64> {
        let w = self.weights.as_ref().ok_or(Error::WeightsUnavailable)?;
        let num: f64 = w
            .values
            .iter()
            .zip(&self.positions)
            .map(|(&wi, &x)| wi * h.eval(x))
            .sum();
        Ok(num / w.sum)
    }

    /// Number of distinct ancestors at the given genealogy level.
    pub fn unique_ancestor_count(&self, level: AncestorLevel) -> Result<usize> {
        let row = match level {
            AncestorLevel::Eve => &self.eve[..],
            AncestorLevel::Time(m) => self.enoch_row(m)?,
        };
        Ok(count_distinct(row, self.positions.len()))
    }
}

fn window_root(lag: Lag, n: usize) -> usize {
    match lag {
        Lag::Finite(l) => n.saturating_sub(l),
        Lag::Full => n,
    }
}

pub(crate) fn count_distinct(row: &[usize], n_particles: usize) -> usize {
    let mut seen = vec![false; n_particles];
    let mut count = 0;
    for &i in row {
        if !seen[i] {
            seen[i] = true;
            count += 1;
        }
    }
    count
}
