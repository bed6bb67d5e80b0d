//! Reproducible random streams.
//!
//! Every random consumer gets its own ChaCha8 stream derived from a 64-bit
//! master seed. The 256-bit key is `master (LE) || domain (LE) || 0^16` and
//! the ChaCha stream id is the replicate index, so replicate `r` of a given
//! domain sees the same numbers regardless of scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains, kept distinct so that e.g. pilot draws never reuse the
/// numbers of the main replicates.
pub mod domain {
    pub const SAMPLE: u64 = 0x5341_4d50;
    pub const MODEL: u64 = 0x4d4f_4445;
    pub const PILOT_SAMPLE: u64 = 0x5049_4c53;
    pub const PILOT_MODEL: u64 = 0x5049_4c4d;
    pub const FIXED_Y: u64 = 0x4649_5859;
}

pub fn stream(master: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
