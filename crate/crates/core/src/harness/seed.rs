//! Counter-based derivation of independent random streams.
//!
//! `seed_derive(master, run, tag)` hashes `tag` with 64-bit FNV-1a, XORs it
//! into `master`, expands the result into a 256-bit ChaCha8 key with four
//! SplitMix64 steps and selects ChaCha stream number `run`. Both ChaCha8
//! and SplitMix64 are fully specified, so the streams are the same on every
//! platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const ENV_TAG: &str = "env";
pub const SCHEDULE_TAG: &str = "schedule";
pub const EXP3_TAG: &str = "exp3";

fn fnv1a64(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn seed_derive(master_seed: u64, run_index: u64, purpose_tag: &str) -> ChaCha8Rng {
    let mut state = master_seed ^ fnv1a64(purpose_tag);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(run_index);
    rng
}

/// The three streams a run draws from: environment noise, MALG spawn
/// coins and the EXP3.P arm draws. Keeping them apart means adding a
/// wrapper never perturbs the environment's randomness.
#[derive(Debug, Clone)]
pub struct RunStreams {
    pub env: ChaCha8Rng,
    pub schedule: ChaCha8Rng,
    pub exp3: ChaCha8Rng,
}

impl RunStreams {
    pub fn derive(master_seed: u64, run_index: u64) -> Self {
        Self {
            env: seed_derive(master_seed, run_index, ENV_TAG),
            schedule: seed_derive(master_seed, run_index, SCHEDULE_TAG),
            exp3: seed_derive(master_seed, run_index, EXP3_TAG),
        }
    }
}
