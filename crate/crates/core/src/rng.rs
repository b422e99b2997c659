//! Seeded randomness. Every stochastic step derives its own stream from the
//! run seed plus a tag path, so results never depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `tags` into `base` to obtain an independent sub-seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(base), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn rng_for(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}

/// Tag namespaces, kept distinct so e.g. fold assignment and epoch shuffling
/// never share a stream.
pub mod tag {
    pub const FOLDS: u64 = 1;
    pub const EPOCH: u64 = 2;
    pub const AUGMENT: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SYNTHETIC: u64 = 5;
    pub const OVERSAMPLE: u64 = 6;
}
