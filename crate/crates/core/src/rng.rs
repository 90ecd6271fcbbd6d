//! Reproducible random streams.
//!
//! All randomness in the crate comes from ChaCha20 (as implemented by
//! `rand_chacha` 0.9), seeded from a 64-bit master seed and split into
//! independent 64-bit stream ids. ChaCha is counter based, so a stream's
//! output depends only on `(seed, stream)` and never on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Identifier of the generator family, recorded in experiment outputs.
pub const GENERATOR_ID: &str = "chacha20/rand_chacha-0.9/seed_from_u64+stream";

pub type StreamRng = ChaCha20Rng;

/// Generator for stream `stream` under master seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream id for a `(domain, index, sub)` triple. Domains keep unrelated
/// consumers (sampling, rounding, Monte Carlo) apart under the same seed.
pub fn stream_id(domain: u16, index: u32, sub: u16) -> u64 {
    ((domain as u64) << 48) | ((index as u64) << 16) | sub as u64
}

pub mod domain {
    pub const SAMPLING: u16 = 0;
    pub const MONTE_CARLO: u16 = 1;
    pub const ROUNDING: u16 = 2;
    pub const EXPERIMENT: u16 = 3;
}
