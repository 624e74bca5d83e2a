//! Deterministic seed derivation.
//!
//! Every stochastic component (noise generation, multi-start sampling, design
//! point sweeps) draws from a ChaCha8 stream seeded through this module, so a
//! run is a pure function of its inputs and one `u64` seed. Sub-seeds are
//! derived statelessly with SplitMix64 so that per-candidate work is
//! independent of iteration order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer (Steele, Lea & Flood 2014).
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the sub-seed for stream `index` of a base seed.
pub fn derive(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index.wrapping_add(1)))
}

/// A seeded portable RNG (ChaCha8; identical streams on all platforms).
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
