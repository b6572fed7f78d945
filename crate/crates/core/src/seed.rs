//! Seed derivation.
//!
//! Stage seeds are derived from the global seed as the first eight bytes
//! (little-endian) of `SHA-256(global_seed.to_le_bytes() || label)`. The
//! labels used by the pipeline are `"embed"`, `"cluster"` and `"synth"`;
//! changing this scheme changes every downstream artifact.

use sha2::{Digest, Sha256};

pub fn derive_seed(global: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(global.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stateless random draw keyed by four counters.
pub fn counter_hash(seed: u64, a: u64, b: u64, c: u64) -> u64 {
    splitmix(splitmix(splitmix(splitmix(seed) ^ a) ^ b) ^ c)
}

/// Uniform draw in `[0, 1)` from a hash value.
pub fn unit_interval(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
