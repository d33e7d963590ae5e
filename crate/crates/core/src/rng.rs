//! Deterministic seed splitting.
//!
//! All randomness in a fit flows from one root seed; each consumer derives
//! its own stream from `(root, purpose, indices...)` so results do not depend
//! on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub const PURPOSE_OUTER: u64 = 0x6f75_7465;
pub const PURPOSE_INNER: u64 = 0x696e_6e65;
pub const PURPOSE_LEVEL: u64 = 0x6c65_7665;
pub const PURPOSE_DATA: u64 = 0x6461_7461;
pub const PURPOSE_ATTACK: u64 = 0x6174_7461;
pub const PURPOSE_EIGEN: u64 = 0x6569_6765;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(root), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}
