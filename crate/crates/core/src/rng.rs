//! Counter-based random streams.
//!
//! Every consumer derives its own generator from `(seed, domain, index)`, so
//! the sequence it sees does not depend on scheduling order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Stream domains. Distinct domains never share a key.
pub mod domain {
    pub const PARTICLE: u64 = 1;
    pub const SPINE: u64 = 2;
    pub const SIBLING: u64 = 3;
    pub const REPLICA: u64 = 4;
    pub const AUX: u64 = 5;
    pub const REFINE: u64 = 6;
}

pub fn stream(seed: u64, domain: u64, index: u128) -> Stream {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    key[16..].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A child seed, e.g. one per replica.
pub fn derive(seed: u64, domain: u64, index: u64) -> u64 {
    splitmix(splitmix(seed ^ splitmix(domain)) ^ index)
}
