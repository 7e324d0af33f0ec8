//! Seeded randomness.
//!
//! Every randomized routine takes an explicit `u64` seed and derives its
//! generator here. ChaCha streams keep independent draws independent even
//! when several routines share one user-facing seed: the seed selects the
//! key, the stream selects the routine (and, for recursive samplers, the
//! recursion depth), so adding a draw to one code path never perturbs
//! another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids, one per randomized routine. Values are arbitrary but frozen:
/// changing them silently changes every seeded output.
pub(crate) const STREAM_UNIFORM: u64 = 1;
pub(crate) const STREAM_RLS_PERMUTE: u64 = 2;
pub(crate) const STREAM_RLS_SKETCH: u64 = 3;
pub(crate) const STREAM_RLS_SELECT: u64 = 4;
pub(crate) const STREAM_KDPP_INIT: u64 = 5;
pub(crate) const STREAM_KDPP_CHAIN: u64 = 6;
pub(crate) const STREAM_CHOOSE_M: u64 = 7;

/// Generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sub-stream id for indexed children of a routine (recursion levels,
/// per-size redraws). SplitMix-style mixing keeps children decorrelated.
pub(crate) fn substream(stream: u64, index: u64) -> u64 {
    let mut z = stream
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z ^= z >> 30;
    z = z.wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
