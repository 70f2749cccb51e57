//! Seeded random streams.
//!
//! All randomness comes from ChaCha8 generators. A run has one master seed;
//! each consumer gets its own stream seed derived as the first eight bytes
//! (little endian) of `SHA-256("sirmix/" || label || "/" || master || "/" || index)`,
//! with `master` and `index` written as decimal integers. Streams for different
//! `(label, index)` pairs are independent for all practical purposes, so
//! replicates can run in any order or in parallel and still reproduce.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

/// Algorithm name recorded in output metadata.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9, seed_from_u64) with SHA-256 stream derivation";

pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(format!("sirmix/{label}/{master}/{index}").as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

pub fn stream(master: u64, label: &str, index: u64) -> SimRng {
    rng_from_seed(derive_seed(master, label, index))
}

/// Hex SHA-256 of a byte slice, used for input digests in run manifests.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
