//! Seed derivation.
//!
//! Every random stream is a ChaCha8 generator keyed by
//! `SHA-256(master_seed ‖ purpose ‖ indices)`. Distinct (purpose, indices)
//! tuples give independent streams, so results never depend on how work is
//! split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Derives a 256-bit key from a master seed, a purpose tag and index path.
pub fn derive_key(master: u64, purpose: &str, path: &[u64]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((purpose.len() as u64).to_le_bytes());
    h.update(purpose.as_bytes());
    for p in path {
        h.update(p.to_le_bytes());
    }
    let mut key = [0u8; 32];
    key.copy_from_slice(&h.finalize());
    key
}

/// Generator for `(master, purpose, path)`.
pub fn stream(master: u64, purpose: &str, path: &[u64]) -> Rng {
    ChaCha8Rng::from_seed(derive_key(master, purpose, path))
}

/// A 64-bit child seed, for APIs that take a plain integer seed.
pub fn child_seed(master: u64, purpose: &str, path: &[u64]) -> u64 {
    let k = derive_key(master, purpose, path);
    u64::from_le_bytes(k[..8].try_into().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = stream(7, "trial", &[0, 1]).next_u64();
        let b = stream(7, "trial", &[0, 1]).next_u64();
        let c = stream(7, "trial", &[1, 0]).next_u64();
        let d = stream(7, "matrix", &[0, 1]).next_u64();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
