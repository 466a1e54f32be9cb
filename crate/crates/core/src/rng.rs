//! Reproducible random streams.
//!
//! Every independent task (one simulated trial, one replication) draws from
//! its own ChaCha20 stream: the 64-bit master seed keys the generator and the
//! task index selects the stream, so results do not depend on how tasks are
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Generator for task `index` under master `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
