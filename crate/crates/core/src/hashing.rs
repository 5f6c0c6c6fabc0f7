//! Fixed, platform-independent hashes and seed derivation.

use sha2::{Digest, Sha256};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a, 64-bit.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    fnv1a64_extend(FNV_OFFSET, bytes)
}

/// Continue an FNV-1a state over more bytes.
pub fn fnv1a64_extend(mut state: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        state ^= u64::from(b);
        state = state.wrapping_mul(FNV_PRIME);
    }
    state
}

/// Lowercase hex SHA-256 of `bytes`, used for artifact content hashes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Derive a stage seed from a top-level seed and a stage label.
///
/// The derivation hashes the label so that adding a stage never shifts the
/// seeds of the others.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let state = fnv1a64_extend(FNV_OFFSET, &seed.to_le_bytes());
    let state = fnv1a64_extend(state, label.as_bytes());
    // final avalanche (splitmix64 finalizer) so nearby seeds decorrelate
    let mut z = state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
