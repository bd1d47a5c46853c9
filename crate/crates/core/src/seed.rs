//! Deterministic seed derivation.
//!
//! Every random quantity in an experiment is reachable from one master seed:
//! instance seeds derive from (master, instance index) and restart seeds from
//! (instance seed, restart index). Pure integer mixing keeps the scheme
//! stable across platforms.

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and an index.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ splitmix64(index ^ 0xA5A5_A5A5_A5A5_A5A5))
}
