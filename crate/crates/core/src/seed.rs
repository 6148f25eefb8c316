//! Child-seed derivation. Every stochastic site draws from its own generator
//! seeded by hashing (parent seed, site label); there is no global RNG.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a textual site label.
pub fn derive(parent: u64, label: &str) -> u64 {
    let mut h = FNV_OFFSET ^ splitmix64(parent);
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(h)
}

/// Derives a child seed from a parent seed and an integer index.
pub fn derive_index(parent: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
