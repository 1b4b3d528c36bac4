//! Named, derived random streams.
//!
//! Every source of randomness in a run comes from a single master seed. A
//! stream is identified by a name (and optionally an index), so changing how
//! one stream is consumed never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn name_hash(name: &str) -> u64 {
    // FNV-1a
    name.bytes().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed of the stream `name` under `master`.
pub fn derive(master: u64, name: &str) -> u64 {
    mix64(mix64(master) ^ name_hash(name))
}

/// Seed of item `index` of the stream `name` under `master`.
pub fn derive_indexed(master: u64, name: &str, index: u64) -> u64 {
    mix64(derive(master, name) ^ mix64(index.wrapping_add(1)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
