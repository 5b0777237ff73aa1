//! Deterministic seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator keyed by a seed
//! derived from a base seed and a path of integer labels, so results never
//! depend on evaluation order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream labels used to keep seed domains disjoint.
pub mod domain {
    pub const PERTURBATION: u64 = 0x5045_5254;
    pub const TRAIN_EPISODE: u64 = 0x5452_4e45;
    pub const EVAL_EPISODE: u64 = 0x4556_414c;
    pub const TASK: u64 = 0x5441_534b;
    pub const PROFILE: u64 = 0x5052_4f46;
    pub const FORECAST: u64 = 0x464f_5243;
    pub const DEMAND: u64 = 0x4445_4d44;
    pub const INIT: u64 = 0x494e_4954;
    pub const META: u64 = 0x4d45_5441;
    pub const SCENARIO: u64 = 0x5343_454e;
    pub const FINETUNE: u64 = 0x4649_4e45;
    pub const TEST_EPISODE: u64 = 0x5445_5354;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes `base` together with `path` into a new 64-bit seed.
pub fn derive(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &label| splitmix64(acc ^ splitmix64(label)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rng_for(base: u64, path: &[u64]) -> ChaCha8Rng {
    rng(derive(base, path))
}
