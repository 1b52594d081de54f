//! Per-replication random streams.
//!
//! Every replication gets its own ChaCha8 stream keyed by the master seed
//! and an experiment tag, with the replication index as the stream id, so
//! results do not depend on the order or thread in which replications run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn replication_rng(master_seed: u64, tag: u64, replication: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&tag.to_le_bytes());
    key[16..24].copy_from_slice(b"diffvar\0");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(replication);
    rng
}

/// Derives a 64-bit value from a seed and tag (SplitMix64 finalizer).
pub fn derive_seed(master_seed: u64, tag: u64) -> u64 {
    let mut z = master_seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
