//! Deterministic RNG streams.
//!
//! Every random consumer (replicate, fold, learner, bootstrap resample) gets
//! its own `ChaCha8Rng`. Streams are derived from a master seed and a small
//! tag path, so results never depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `tags` under `master`.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix(master), |acc, &t| splitmix(acc.rotate_left(23) ^ splitmix(t)))
}

pub fn stream(master: u64, tags: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tags))
}

/// Seed for bootstrap replicate `index`: `master ⊕ index`.
pub fn replicate_seed(master: u64, index: u64) -> u64 {
    master ^ index
}

pub fn seeded(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub mod tag {
    pub const FOLDS: u64 = 1;
    pub const LEARNER: u64 = 2;
    pub const DENSITY: u64 = 3;
    pub const OUTCOME: u64 = 4;
    pub const REPLICATE: u64 = 5;
    pub const BOOTSTRAP: u64 = 6;
}
