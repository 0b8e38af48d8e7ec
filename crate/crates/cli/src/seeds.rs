//! Derivation of every random stream from the single run seed.
//!
//! Burst `b` (in sorted discovery order) gets its own seed, drawn from stream
//! `BURST_STREAM_BASE + b` of the run seed. Within a burst, frame `i` is
//! noised with stream `i` of the burst seed and sampled noise parameters come
//! from stream [`PARAMS_STREAM`]. The train/test split uses the run seed
//! directly.

use fstack_core::noise::RngSeed;

pub const BURST_STREAM_BASE: u64 = 1 << 32;
pub const PARAMS_STREAM: u64 = u64::MAX;

pub fn burst_seed(seed: u64, burst: usize) -> u64 {
    RngSeed::new(seed, BURST_STREAM_BASE + burst as u64).derive()
}
