//! The single pseudo-random generator used throughout the crate.
//!
//! Every seeded routine builds a [`Xoshiro256PlusPlus`] through
//! [`seeded`]: the 64-bit seed is expanded into the 256-bit state with
//! SplitMix64, so a given seed yields the same stream on every platform.
//! Normal variates come from `rand_distr::StandardNormal` (ziggurat).

use rand::SeedableRng;
pub use rand_xoshiro::Xoshiro256PlusPlus as Rng64;

pub fn seeded(seed: u64) -> Rng64 {
    Rng64::seed_from_u64(seed)
}

/// Derives an independent stream for a sub-task (e.g. one random instance
/// of a verification suite) from a base seed.
pub fn substream(seed: u64, index: u64) -> Rng64 {
    seeded(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17))
}
