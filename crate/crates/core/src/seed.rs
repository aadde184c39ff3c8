//! Deterministic seed derivation.
//!
//! Every random quantity in the pipeline is drawn from a ChaCha8 stream whose
//! seed is a SplitMix64-style mix of a parent seed and a small set of labels.
//! This keeps any single scenario (or any single sample inside it)
//! regenerable in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a parent seed with a label into a child seed.
pub fn mix(parent: u64, label: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ label.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Per-scenario seed derived from the dataset master seed.
pub fn scenario_seed(master_seed: u64, scenario_index: u64) -> u64 {
    mix(master_seed, scenario_index)
}

/// Stream labels, so that e.g. noise and user drops never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Scene = 1,
    Users = 2,
    Pilot = 3,
    Localization = 4,
    Detection = 5,
    Precoding = 6,
    Decoding = 7,
    Eval = 8,
}

pub fn stream_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    mix(mix(seed, stream as u64), index)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
