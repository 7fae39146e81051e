//! Sub-seed derivation.
//!
//! Every random stream in an experiment is seeded from the single top-level
//! seed by mixing in a path of integer labels with SplitMix64. Two different
//! label paths give unrelated streams; the same path always gives the same one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `parent` and a label path.
pub fn derive(parent: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(parent), |acc, &l| splitmix64(acc ^ splitmix64(l)))
}

/// The generator used for every stochastic component.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// Label namespaces, so a taskset stream never collides with a demand stream.
pub const TASKSET: u64 = 1;
pub const DEMANDS: u64 = 2;
pub const PERIODS: u64 = 3;
