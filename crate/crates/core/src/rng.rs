//! Seeded random number generation.
//!
//! Every random choice in the crate draws from a generator created here, so a
//! run is reproducible from its seed alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes `stream` into `seed` (SplitMix64 finalizer) to obtain an
/// independent seed for a sub-task such as a replication.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Rounds a non-negative count half up (`0.5 -> 1`).
pub(crate) fn round_count(x: f64) -> usize {
    debug_assert!(x >= 0.0);
    (x + 0.5).floor() as usize
}
