//! Independent, reproducible random streams derived from one seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids; each consumer draws from its own stream so that adding a
/// draw in one place never shifts another.
pub mod streams {
    pub const TRAIN_SCENES: u64 = 1;
    pub const ACTIONS: u64 = 2;
    pub const SAMPLING: u64 = 3;
    pub const EVAL_SCENES: u64 = 4;
    pub const EVAL_POLICY: u64 = 5;
    pub const INIT: u64 = 6;
    pub const PRELOAD: u64 = 7;
    pub const TEST_EPOCH: u64 = 8;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derived seed for `(seed, stream, index)`.
pub fn derive(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index)
}

pub fn stream(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, stream, index))
}
