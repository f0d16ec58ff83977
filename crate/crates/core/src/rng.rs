//! Seedable, splittable random streams.
//!
//! Every consumer derives its own ChaCha stream from a master seed and a
//! stream index, so scene `i` of a dataset does not depend on how many draws
//! scene `i - 1` happened to make.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream domain tags keep independent uses of the same index apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Scene = 1,
    Questions = 2,
    Faults = 3,
    Splits = 4,
}

/// Derive the generator for `(master, stream, index)`.
pub fn stream(master: u64, domain: Stream, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((domain as u64) << 48) ^ index);
    rng
}

/// SplitMix64 finaliser; used where a cheap deterministic hash of a few
/// integers is needed (fault injection keys, scene seeds).
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed recorded on a scene derived from a master seed and its index.
pub fn scene_seed(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index.wrapping_add(1)))
}
