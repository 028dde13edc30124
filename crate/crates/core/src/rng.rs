//! Seeded, splittable random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha stream keyed by
//! `(seed, domain)` and selected by an index (basis row, class, trial, ...).
//! A value therefore depends only on its coordinates, never on the order in
//! which parallel workers happen to request it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Separates the purposes a single user seed is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    BasisRows = 1,
    BasisPhases = 2,
    PrivacyNoise = 3,
    Samples = 4,
    Split = 5,
    Trials = 6,
    Probe = 7,
    Tuning = 8,
}

/// SplitMix64 finalizer.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream number `index` of `(seed, domain)`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, domain as u64));
    rng.set_stream(index);
    rng
}

/// Derives a child seed, e.g. one per retraining pass or tuning replicate.
pub fn child_seed(seed: u64, domain: Domain, index: u64) -> u64 {
    mix(mix(seed, domain as u64), index.wrapping_add(1))
}
