//! Seed derivation shared by every component that owns an RNG stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer applied to `base ^ (index * golden)`.
///
/// This is the integer mixing function used to derive independent per-run and
/// per-stream seeds, so a run's randomness depends only on `(base, index)` and
/// never on scheduling order.
pub fn mix(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng(base: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(base, index))
}

/// Stream indices for the RNGs owned by a single run.
pub mod stream {
    pub const ENV: u64 = 1;
    pub const LEARNER_INIT: u64 = 2;
    pub const ACTION: u64 = 3;
    pub const TRANSFER: u64 = 4;
}
