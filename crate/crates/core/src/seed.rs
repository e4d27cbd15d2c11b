//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a seed mixed from a run seed and a stream index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finaliser.
pub fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent seed for stream `index` of `base`.
pub fn mix(base: u64, index: u64) -> u64 {
    splitmix(splitmix(base) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn rng(base: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(base, index))
}
