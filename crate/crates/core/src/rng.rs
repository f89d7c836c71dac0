//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream selected by a
//! `(seed, stream)` pair, so replication `r` sees the same numbers whichever
//! worker runs it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream id of replication `rep` in study component `group` (e.g. a distribution index).
pub fn stream_id(group: u32, rep: u64) -> u64 {
    (u64::from(group) << 40) | (rep & ((1 << 40) - 1))
}
