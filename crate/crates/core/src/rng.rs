//! Reproducible random streams.
//!
//! Every simulation draws from a stream identified by
//! `(master_seed, replication, stage)`. The master seed and stage select a
//! ChaCha8 key and the replication index selects one of its 2^64 streams, so
//! results never depend on which thread ran which replication.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stage tags used by the library. Callers may use any other value for their
/// own stages.
pub mod stage {
    pub const REPLICATION: u32 = 0;
    pub const NULL_CALIBRATION: u32 = 1;
    pub const GRID_POINT: u32 = 2;
    pub const ART_RESAMPLE: u32 = 3;
    pub const FPR: u32 = 4;
    pub const POLICY_PARAMETER: u32 = 5;
    pub const POST_EVAL: u32 = 6;
    pub const ALTERNATIVE: u32 = 7;
    pub const PROPERTY_SUITE: u32 = 8;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn key_for(master_seed: u64, stage: u32) -> [u8; 32] {
    let mut state = master_seed ^ (u64::from(stage)).wrapping_mul(0xD6E8_FEB8_6659_FD93);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// Returns the stream for one replication of one stage.
pub fn derive_stream(master_seed: u64, replication: u64, stage: u32) -> SimRng {
    let mut rng = ChaCha8Rng::from_seed(key_for(master_seed, stage));
    rng.set_stream(replication);
    rng
}

/// Derives a child master seed, for nested experiments that need their own
/// family of streams (a calibration run inside a power analysis, say).
pub fn derive_seed(master_seed: u64, index: u64, stage: u32) -> u64 {
    let mut state = master_seed
        ^ index.wrapping_mul(0xA076_1D64_78BD_642F)
        ^ (u64::from(stage) << 48).wrapping_add(0xE703_7ED1_A0B4_28DB);
    splitmix64(&mut state);
    splitmix64(&mut state)
}
