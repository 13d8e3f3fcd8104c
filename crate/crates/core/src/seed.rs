//! Seed derivation.
//!
//! Every random stream in the crate is derived from one master seed with
//! [`split`], a SplitMix64 finalizer applied to `master + GOLDEN * (stream + 1)`.
//! Streams with distinct indices are statistically independent for practical
//! purposes, and the mapping does not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the sub-seed for `stream` from `master`.
pub fn split(master: u64, stream: u64) -> u64 {
    mix(master.wrapping_add(GOLDEN.wrapping_mul(stream.wrapping_add(1))))
}

/// Two-level split, e.g. (replication, market).
pub fn split2(master: u64, a: u64, b: u64) -> u64 {
    split(split(master, a), b)
}

/// The generator used throughout the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Named stream tags so that unrelated consumers of one master seed never collide.
pub mod stream {
    pub const COVARIATES: u64 = 0x436f_7661;
    pub const SHARES: u64 = 0x5368_6172;
    pub const PROJECTION: u64 = 0x5072_6f6a;
    pub const RESTARTS: u64 = 0x5265_7374;
    pub const DIAGNOSTIC: u64 = 0x4469_6167;
}
