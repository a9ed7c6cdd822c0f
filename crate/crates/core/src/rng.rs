//! Seeded random streams.
//!
//! Every random quantity in the toolkit comes from a `Xoshiro256PlusPlus` generator
//! seeded through SplitMix64. Independent streams are derived by hashing the master
//! seed together with a list of tags, so the stream for trial 7 is the same whether
//! trials 0..6 ran before it, after it, or concurrently.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Rng = Xoshiro256PlusPlus;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive 64-bit mix of a seed with one tag.
pub fn hash64(seed: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ tag.rotate_left(17) ^ 0xA076_1D64_78BD_642F)
}

/// Seed obtained by folding `tags` into `seed`.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(seed, |acc, &t| hash64(acc, t))
}

/// Generator for the stream identified by `(seed, tags...)`.
pub fn stream(seed: u64, tags: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, tags))
}

/// Stream tags used across modules.
pub mod tags {
    pub const ENCODER: u64 = 0x454e_434f;
    pub const ANCHOR: u64 = 0x414e_4348;
    pub const SOURCE: u64 = 0x534f_5552;
    pub const TARGET: u64 = 0x5441_5247;
    pub const OFFSET: u64 = 0x4f46_4653;
    pub const TRIAL: u64 = 0x5452_4941;
    pub const SQUARE: u64 = 0x5351_5541;
    pub const FOREST: u64 = 0x464f_5245;
    pub const CAPTION: u64 = 0x4341_5054;
    pub const THEORY: u64 = 0x5448_454f;
}
