//! Seeded random streams.
//!
//! All randomness in the crate flows from explicit 64-bit seeds. Parallel work
//! derives one independent stream per work item from `(seed, index)`, so results
//! do not depend on how items are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `index` of the family rooted at `seed`.
pub fn stream(seed: u64, index: u64) -> Rng {
    seeded(derive(seed, index))
}

/// SplitMix64 mix of a seed and an index.
pub fn derive(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
