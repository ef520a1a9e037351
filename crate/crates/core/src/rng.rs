//! Deterministic random substreams.
//!
//! Every random decision in the crate is drawn from a ChaCha stream whose
//! seed is derived from a master seed and a small tuple of integers (node,
//! day, replicate, ...). Results therefore do not depend on iteration order
//! or on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Domain tags keep streams for unrelated purposes apart.
pub mod tag {
    pub const TRANSMISSION: u64 = 0x5452_414e;
    pub const HOOK: u64 = 0x484f_4f4b;
    pub const GENERATE: u64 = 0x4745_4e45;
    pub const DENSIFY: u64 = 0x4445_4e53;
    pub const REPLICATE: u64 = 0x5245_504c;
    pub const RANKING: u64 = 0x5241_4e4b;
    pub const SEEDS: u64 = 0x5345_4544;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with an ordered list of keys into a new 64-bit seed.
pub fn derive_seed(master: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(master), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn substream(master: u64, keys: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(master, keys))
}

pub fn from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
