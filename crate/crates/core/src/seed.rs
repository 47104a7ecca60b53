//! Deterministic seed derivation.
//!
//! Every random stream in the crate is keyed by `(master seed, purpose, index...)`
//! so that results do not depend on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const SOURCE: u64 = 0x736f_7572_6365;
pub(crate) const CODEBOOK: u64 = 0x636f_6465_626b;
pub(crate) const KMEANS: u64 = 0x6b6d_6561_6e73;
pub(crate) const SWEEP: u64 = 0x7377_6565_70;
pub(crate) const SPLIT: u64 = 0x7370_6c69_74;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with a sequence of keys into a child seed.
pub fn derive(seed: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix(seed), |acc, &k| splitmix(acc ^ splitmix(k)))
}

pub(crate) fn rng(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, keys))
}
