//! Seed derivation for reproducible, order-independent random streams.
//!
//! Every independent unit of work (a Monte Carlo replication, a sampled
//! episode, a blend draw) gets its own generator seeded from
//! `splitmix64(master ^ index)`. Results therefore do not depend on how the
//! units are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for all sampling in this crate.
pub type StreamRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 step: advances `x` by the golden gamma and applies the finalizer.
#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of substream `index` under `master`.
#[inline]
pub fn substream_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ index)
}

/// The `index`-th state of a SplitMix64 sequence started at `master`.
///
/// Index 0 maps to `master` itself, so a one-element batch reproduces the
/// single-shot call with the same seed.
#[inline]
pub fn sequence_seed(master: u64, index: u64) -> u64 {
    master.wrapping_add(index.wrapping_mul(GOLDEN_GAMMA))
}

pub fn stream(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}
