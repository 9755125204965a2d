//! Seed-derived random streams.
//!
//! Every random entity (a video's annotations, one split of the participant
//! pool, one session) draws from its own ChaCha stream selected by
//! `(seed, domain, index)`. Results therefore do not depend on the order or
//! the thread in which entities are generated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub(crate) enum Domain {
    TrueCurves = 1,
    VideoAnnotations = 2,
    Split = 3,
    Session = 4,
}

pub(crate) fn stream_rng(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(domain as u8) << 56) ^ (index & ((1 << 56) - 1)));
    rng
}

/// Stable 64-bit key for a string identifier.
pub(crate) fn string_key(s: &str) -> u64 {
    let digest = Sha256::digest(s.as_bytes());
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(b)
}
