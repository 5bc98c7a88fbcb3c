//! Deterministic, order-independent random streams.
//!
//! Every stochastic routine in this crate draws from `stream(master, j)`
//! where `j` is a trial or draw counter. Streams are derived by hashing,
//! never by advancing a shared generator, so results cannot depend on
//! evaluation order or on how work is split across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer. Bijective on u64 with strong avalanche.
fn mix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for stream `j` of `master`. Distinct `(master, j)` pairs give
/// statistically independent streams.
pub fn stream(master: u64, j: u64) -> ChaCha8Rng {
    let base = mix64(master) ^ mix64(j ^ 0xd1b5_4a32_d192_ed03);
    let mut seed = [0u8; 32];
    for (w, chunk) in seed.chunks_exact_mut(8).enumerate() {
        chunk.copy_from_slice(&mix64(base.wrapping_add(1 + w as u64)).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Two-level stream: substream `b` of stream `a` of `master`. Used when an
/// experiment is keyed by both a configuration index and a trial counter.
pub fn substream(master: u64, a: u64, b: u64) -> ChaCha8Rng {
    stream(mix64(master).wrapping_add(mix64(a)), b)
}
