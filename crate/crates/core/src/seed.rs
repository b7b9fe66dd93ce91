//! Deterministic RNG derivation.
//!
//! All randomness in the crate flows from a master seed. Independent
//! streams are derived with ChaCha's stream counter so that records,
//! trials, and epochs can be generated in any order (including in
//! parallel) while staying bit-reproducible.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// An RNG for stream `stream` of the generator keyed by `master`.
pub fn derive_rng(master: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

/// Packs a two-level index (e.g. epoch and sample) into one stream id.
pub fn stream_id(major: u32, minor: u32) -> u64 {
    ((major as u64) << 32) | minor as u64
}
