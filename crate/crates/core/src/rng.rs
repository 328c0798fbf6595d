//! Seeded random streams.
//!
//! Every random quantity is drawn from a ChaCha8 generator keyed by a master
//! seed and a stream number, so work split across threads reproduces the
//! sequential result exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream numbers for the draws belonging to one simulation replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Data = 0,
    SelectedTest = 1,
    TargetTest = 2,
    EmptyTest = 3,
}

pub fn stream_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Generator for `purpose` within replicate `replicate`.
pub fn replicate_rng(master_seed: u64, replicate: u64, purpose: Purpose) -> ChaCha8Rng {
    stream_rng(master_seed, replicate * 4 + purpose as u64)
}

/// Seed handed to a sub-procedure that takes a plain `u64`.
pub fn replicate_seed(master_seed: u64, replicate: u64, purpose: Purpose) -> u64 {
    use rand::Rng;
    replicate_rng(master_seed, replicate, purpose).random()
}
