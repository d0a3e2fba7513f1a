//! Reproducible random streams.
//!
//! Every experiment draws from `ChaCha8Rng` generators whose seeds are derived
//! from a master seed and a path of labels, e.g.
//! `derive_seed(master, &[hash_label("white/eq/σ=0.5"), realization, STREAM_INPUT])`.
//! Seeds depend only on the path, so adding or removing sweep cells never
//! changes the streams used by existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_INPUT: u64 = 1;
pub const STREAM_EQUATION_NOISE: u64 = 2;
pub const STREAM_OUTPUT_NOISE: u64 = 3;
pub const STREAM_VALIDATION_INPUT: u64 = 4;
pub const STREAM_INIT: u64 = 5;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a hash of a label.
pub fn hash_label(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(master), |acc, &p| mix64(acc ^ mix64(p)))
}

pub fn stream(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}
