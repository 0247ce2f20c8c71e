//! Named, reproducible random streams.
//!
//! Every consumer of randomness derives its own stream from a single root seed
//! and a stream name, so e.g. map generation can be replayed without replaying
//! the policy's exploration draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Root-seeded stream for `name`.
pub fn stream(seed: u64, name: &str) -> Rng {
    Rng::seed_from_u64(mix(seed, name, 0))
}

/// Indexed child stream, e.g. one per evaluation case or per actor.
pub fn indexed_stream(seed: u64, name: &str, index: u64) -> Rng {
    Rng::seed_from_u64(mix(seed, name, index.wrapping_add(1)))
}

fn mix(seed: u64, name: &str, index: u64) -> u64 {
    // FNV-1a over the name, then splitmix64 finalization with seed and index.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix(splitmix(seed ^ h) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
