//! Deterministic random streams.
//!
//! Every random decision in the toolkit draws from a ChaCha8 stream whose
//! 256-bit seed is `SHA-256("seqmia/rng/v1" | purpose | base seed | parts)`.
//! Streams are therefore reproducible across runs and platforms, and
//! independent for different purposes or keys.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub use rand_chacha::ChaCha8Rng as StreamRng;

/// Version tag mixed into every derived seed. Changing it changes every
/// split, shuffle and synthetic translation.
pub const RNG_VERSION: &str = "seqmia/rng/v1";

pub fn derive_seed(base: u64, purpose: &str, parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(RNG_VERSION.as_bytes());
    h.update([0u8]);
    h.update(purpose.as_bytes());
    h.update([0u8]);
    h.update(base.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

pub fn stream(base: u64, purpose: &str, parts: &[&[u8]]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed(base, purpose, parts))
}
