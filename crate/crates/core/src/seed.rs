//! Seed fan-out.
//!
//! A master seed is split into per-component seeds by mixing it with a fixed
//! stream tag through SplitMix64. Each component owns its own ChaCha8 stream,
//! so adding draws to one component never shifts another (e.g. changing a
//! cost grid never perturbs data generation).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::RngSeed;

pub type Rng = ChaCha8Rng;

/// Stream tags used by the harness.
pub mod stream {
    pub const DATA: u64 = 0x01;
    pub const CLIENT_INIT: u64 = 0x02;
    pub const CLIENT_SGD: u64 = 0x03;
    pub const SERVER_INIT: u64 = 0x04;
    pub const REJECTOR_INIT: u64 = 0x05;
    pub const TRAIN_SHUFFLE: u64 = 0x06;
    pub const BRR_UNIFORM: u64 = 0x07;
    pub const BASELINE_UNIFORM: u64 = 0x08;
    pub const AVAILABILITY: u64 = 0x09;
    pub const WORLD: u64 = 0x0a;
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngSeed {
    /// Child seed for the stream identified by `tag`.
    pub fn derive(self, tag: u64) -> RngSeed {
        RngSeed(splitmix64(
            splitmix64(self.0) ^ tag.wrapping_mul(0xd6e8_feb8_6659_fd93),
        ))
    }

    pub fn rng(self) -> Rng {
        Rng::seed_from_u64(self.0)
    }
}

/// Deterministic uniform in `[0, 1)` keyed by `(seed, index)`, independent of query order.
pub fn keyed_uniform(seed: RngSeed, index: u64) -> f64 {
    let bits = splitmix64(seed.derive(index).0);
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
