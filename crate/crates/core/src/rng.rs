//! Seed handling.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 stream derived
//! from a user seed plus a fixed tag, so independent consumers never share a
//! stream and adding a new consumer cannot reorder existing draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// A generator for `(seed, tag)`. Tags select a ChaCha stream id, which gives
/// statistically independent sequences for the same key.
pub fn stream(seed: u64, tag: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}

/// SplitMix64 finalizer; used to derive child seeds (per draw, per cell).
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
