//! Seed derivation.
//!
//! Every random stream in the pipeline is derived from one root seed plus a
//! purpose label and an index, so that a whole run can be replayed from a
//! single integer. The derivation is `SHA-256(root_le || label || index_le)`,
//! truncated to its first eight bytes (little endian).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a child seed for `label`/`index` from `root`.
pub fn derive(root: u64, label: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}

/// Deterministic generator for a derived stream.
pub fn rng(root: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(root, label, index))
}
