//! Seeded random streams.
//!
//! Every stochastic operation takes a `u64` seed. Work that may be split across
//! threads (Monte-Carlo trials, per-sample annotation) derives one ChaCha stream
//! per item from `(seed, index)`, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
