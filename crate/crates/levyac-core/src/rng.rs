//! Seed derivation and keyed random substreams.
//!
//! A single master seed fans out into independent ChaCha streams keyed by a
//! tag path, e.g. `(NOISE, path)` or `(AGENT, agent, outer)`. Draw order
//! inside one stream is fixed by the consumer, so any assignment of streams
//! to workers reproduces the same numbers bit for bit.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// Tag namespace; keeps substream keys from colliding across modules.
pub mod tags {
    pub const NOISE: u64 = 0x4e;
    pub const JUMP: u64 = 0x4a;
    pub const NET: u64 = 0x57;
    pub const BUFFER: u64 = 0x42;
    pub const CRITIC: u64 = 0x43;
    pub const ACTOR: u64 = 0x41;
    pub const EVAL: u64 = 0x45;
    pub const AGENT: u64 = 0x47;
}

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed and a tag path into a derived seed.
pub fn derive(master: u64, path: &[u64]) -> u64 {
    let mut s = splitmix(master.wrapping_add(GAMMA));
    for &tag in path {
        s = splitmix(s ^ splitmix(tag.wrapping_add(GAMMA)));
    }
    s
}

/// A ChaCha stream keyed by `derive(master, path)`.
pub fn stream(master: u64, path: &[u64]) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut s = derive(master, path);
    for chunk in key.chunks_exact_mut(8) {
        s = splitmix(s.wrapping_add(GAMMA));
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
