//! Named deterministic random streams.
//!
//! Every consumer of randomness derives its own ChaCha stream from the run
//! seed, a purpose label and an index, so streams never overlap and results do
//! not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: &str, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ fnv1a(purpose.as_bytes())));
    rng.set_stream(index);
    rng
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
