//! Counter-based random streams.
//!
//! Every random draw is taken from a ChaCha8 stream addressed by
//! `(seed, stream)`. Trajectory `i` of a history reads stream `i`; reset
//! decisions read [`RESET_STREAM`]. Because no stream is shared, trajectories
//! can be simulated in any order or in parallel with identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream reserved for reset decisions / horizon planning.
pub const RESET_STREAM: u64 = u64::MAX;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn trajectory_rng(seed: u64, trajectory: usize) -> ChaCha8Rng {
    stream_rng(seed, trajectory as u64)
}

/// Mixes a master seed with a tuple of indices (SplitMix64 finalizer per
/// component). Stable across platforms and releases.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = splitmix(master ^ 0x6a09_e667_f3bc_c908);
    for &p in path {
        state = splitmix(state ^ splitmix(p.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    state
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
