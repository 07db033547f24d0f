//! Deterministic RNG substreams.
//!
//! Every random decision draws from a ChaCha stream keyed by the master seed
//! and a path of integers (level, particle, purpose, ...). Results therefore
//! do not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SubRng = ChaCha8Rng;

/// Purpose tags mixed into substream keys.
pub mod tag {
    pub const INIT: u64 = 1;
    pub const RESAMPLE: u64 = 2;
    pub const MOVE: u64 = 3;
    pub const REFRESH: u64 = 4;
    pub const BATCH: u64 = 5;
    pub const MPPI: u64 = 6;
    pub const CHAIN: u64 = 7;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a key path into a 256-bit ChaCha seed.
pub fn substream(seed: u64, path: &[u64]) -> SubRng {
    let mut h = splitmix64(seed);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    let mut bytes = [0u8; 32];
    let mut s = h;
    for chunk in bytes.chunks_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}
