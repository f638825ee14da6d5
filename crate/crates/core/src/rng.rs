//! Seed derivation. Every random draw in a run traces back to one `u64` seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Independent stream `label` under `seed`.
pub fn stream(seed: u64, label: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label);
    rng
}

/// Child seed for trial `index` of a batch.
pub fn trial_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) mod labels {
    pub const MASTER_KEYS: u64 = 1;
    pub const ALICE: u64 = 10;
    pub const BOB: u64 = 11;
    pub const KDC: u64 = 12;
    pub const ALICE_KEY: u64 = 20;
    pub const BOB_KEY: u64 = 21;
    pub const CHANNEL: u64 = 30;
    pub const EVE: u64 = 40;
    pub const PAYLOAD: u64 = 50;
}
