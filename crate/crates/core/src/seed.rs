//! Deterministic per-job random streams.

use sha2::{Digest, Sha256};

/// Derives a child seed from `master` and a job key, independent of scheduling order.
pub fn derive(master: u64, key: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(key.as_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("digest has 32 bytes"))
}
