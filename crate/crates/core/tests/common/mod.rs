#![allow(dead_code)]

use std::collections::BTreeMap;

use pfvar::seed::derived_rng;
use pfvar::DiscreteModel;
use rand::Rng;

/// Sticky two-state chain with clearly different potentials for the two
/// observation symbols.
pub fn sticky_two_state() -> DiscreteModel {
    DiscreteModel::new(
        vec![0.5, 0.5],
        vec![vec![0.9, 0.1], vec![0.15, 0.85]],
        BTreeMap::from([(0, vec![1.0, 0.2]), (1, vec![0.25, 1.2])]),
    )
    .unwrap()
}

/// Two-state chain that forgets its past within a few steps.
pub fn mixing_two_state() -> DiscreteModel {
    DiscreteModel::new(
        vec![0.5, 0.5],
        vec![vec![0.7, 0.3], vec![0.4, 0.6]],
        BTreeMap::from([(0, vec![1.0, 0.3]), (1, vec![0.4, 1.5])]),
    )
    .unwrap()
}

pub fn three_state() -> DiscreteModel {
    DiscreteModel::new(
        vec![0.2, 0.5, 0.3],
        vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.5, 0.3], vec![0.25, 0.25, 0.5]],
        BTreeMap::from([(0, vec![1.2, 0.4, 0.7]), (1, vec![0.3, 0.9, 1.6])]),
    )
    .unwrap()
}

fn random_simplex<R: Rng>(rng: &mut R, s: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..s).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Random finite-state model with 2 to 4 states and two observation symbols,
/// drawn from a fixed stream.
pub fn random_discrete(master: u64, index: u64) -> DiscreteModel {
    let mut rng = derived_rng(master, 99, index);
    let s = rng.random_range(2..=4);
    let chi = random_simplex(&mut rng, s);
    let m = (0..s).map(|_| random_simplex(&mut rng, s)).collect();
    let potentials = (0..2u32)
        .map(|z| (z, (0..s).map(|_| rng.random_range(0.1..2.0)).collect()))
        .collect();
    DiscreteModel::new(chi, m, potentials).unwrap()
}

/// Random symbol sequence over `{0, 1}`.
pub fn random_symbols(master: u64, index: u64, len: usize) -> Vec<f64> {
    let mut rng = derived_rng(master, 98, index);
    (0..len).map(|_| rng.random_range(0..2u32) as f64).collect()
}

pub fn indicator(states: usize, s: usize) -> Vec<f64> {
    (0..states).map(|k| if k == s { 1.0 } else { 0.0 }).collect()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
