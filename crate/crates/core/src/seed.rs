//! Seed derivation. Every random stream in a run is keyed off the run seed so
//! that results never depend on execution order or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a key path into a new, well-spread seed.
pub fn derive_seed(base: u64, key: &[u64]) -> u64 {
    key.iter()
        .fold(splitmix64(base), |acc, &k| splitmix64(acc.rotate_left(23) ^ k))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// Stream labels for derive_seed, kept distinct so no two consumers share a
// random stream.
pub(crate) const KEY_INIT: u64 = 1;
pub(crate) const KEY_STREAM: u64 = 2;
pub(crate) const KEY_TRAIN: u64 = 3;
pub(crate) const KEY_SYNTH_TRAIN: u64 = 4;
pub(crate) const KEY_SYNTH_TEST: u64 = 5;
pub(crate) const KEY_SYNTH_CLASSES: u64 = 6;
pub(crate) const KEY_RUN: u64 = 7;
