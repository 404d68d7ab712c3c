//! Deterministic random streams.
//!
//! Every random decision in a run is drawn from a stream keyed by the master
//! seed plus a path of labels (generation, phase, candidate index). Parallel
//! schedules therefore never change results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a seed and a label path into a single 64-bit key.
pub fn derive_key(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p.wrapping_add(0x632B_E59B_D9B4_E019))))
}

pub fn stream(seed: u64, path: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_key(seed, path))
}

/// Phase labels used in stream paths.
pub mod phase {
    pub const INIT: u64 = 1;
    pub const IMPROVE: u64 = 2;
    pub const TEMPER: u64 = 3;
    pub const TRAIN: u64 = 4;
    pub const SAMPLE: u64 = 5;
    pub const MODEL_INIT: u64 = 6;
    pub const REPAIR: u64 = 7;
}
