//! Deterministic seed derivation for independent random streams.
//!
//! Every stochastic step in the library (jitter draws, noise draws, training
//! subsets, experiment trials) derives its own seed from a base seed and a
//! stream index, so that runs are reproducible and trials can be evaluated
//! in any order or in parallel without changing results.

/// SplitMix64 finalizer; decorrelates nearby integer inputs.
fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed for stream `stream` of generator `base`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream))
}

/// Derive a child seed from a path of stream indices, left to right.
pub fn derive_seed_path(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(base, |acc, &s| derive_seed(acc, s))
}
