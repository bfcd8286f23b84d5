//! Seed derivation for independent, reproducible RNG streams.
//!
//! Every stream is a ChaCha8 generator seeded from a 64-bit value obtained by
//! folding `(master, stream, index)` through the SplitMix64 finaliser. Distinct
//! `(stream, index)` pairs give unrelated seeds; identical triples give
//! identical runs on the same build.

use rand::SeedableRng;

use crate::fk_model::SmcRng;

/// Stream tags used by the experiment layer.
pub mod stream {
    pub const OBSERVATIONS: u64 = 1;
    pub const SWEEP: u64 = 2;
    pub const REFERENCE: u64 = 3;
    pub const LONG_RUN: u64 = 4;
    pub const CI: u64 = 5;
    pub const SINGLE_RUN: u64 = 6;
}

/// SplitMix64 output function.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index)
}

pub fn rng_from_seed(seed: u64) -> SmcRng {
    SmcRng::seed_from_u64(seed)
}

pub fn derived_rng(master: u64, stream: u64, index: u64) -> SmcRng {
    rng_from_seed(derive_seed(master, stream, index))
}
