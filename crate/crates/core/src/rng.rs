//! Seeded, stream-addressable random number generators.
//!
//! Every random consumer is driven by a [`ChaCha8Rng`] identified by a
//! `(seed, stream)` pair, so parallel workers get independent reproducible
//! streams regardless of scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type DpRng = ChaCha8Rng;

/// RNG for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> DpRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws a base seed from `rng` for deriving child streams.
pub fn fork_seed<R: Rng + ?Sized>(rng: &mut R) -> u64 {
    rng.random()
}
