//! Counter-addressed random streams.
//!
//! Every random draw in the crate is addressed by `(master seed, purpose,
//! replica, lane)`. The purpose and master seed select a ChaCha8 key, the
//! replica selects the ChaCha stream, and the lane (usually a mode index)
//! selects a disjoint window of 2^40 words inside that stream. A replica's
//! draws therefore never depend on which worker thread produced them or in
//! which order replicas were scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Words reserved per lane inside one ChaCha stream.
const LANE_SHIFT: u32 = 40;

/// Independent consumers of randomness. Each gets its own key so that adding
/// draws to one consumer never shifts another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    OuNoise,
    Sampling,
    Martingale,
    Initialization,
    DriftCells,
    Validation,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::OuNoise => 0x6f75_6e6f_6973_6531,
            Purpose::Sampling => 0x7361_6d70_6c69_6e67,
            Purpose::Martingale => 0x6d61_7274_696e_6731,
            Purpose::Initialization => 0x696e_6974_6961_6c31,
            Purpose::DriftCells => 0x6472_6966_7463_656c,
            Purpose::Validation => 0x7661_6c69_6461_7465,
        }
    }
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn key(seed: u64, purpose: Purpose) -> [u8; 32] {
    let mut out = [0u8; 32];
    let mut state = seed ^ purpose.tag();
    for chunk in out.chunks_exact_mut(8) {
        state = mix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    out
}

/// Generator for one `(seed, purpose, replica, lane)` address.
pub fn stream(seed: u64, purpose: Purpose, replica: u64, lane: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(key(seed, purpose));
    rng.set_stream(replica);
    rng.set_word_pos(u128::from(lane) << LANE_SHIFT);
    rng
}
