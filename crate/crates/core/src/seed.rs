//! Stable seed derivation.
//!
//! Per-document random streams are keyed on `(global seed, label)` through
//! SHA-256 so results do not depend on processing order, worker count, or the
//! standard library's hasher.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub type DpRng = ChaCha20Rng;

pub fn derive_seed(global_seed: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(global_seed.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_from_seed(seed: u64) -> DpRng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn document_rng(global_seed: u64, document_id: &str) -> DpRng {
    rng_from_seed(derive_seed(global_seed, document_id))
}
