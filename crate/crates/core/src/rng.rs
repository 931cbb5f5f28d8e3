//! Named random sub-generators.
//!
//! Every random decision in the pipeline draws from a ChaCha8 generator keyed
//! by the run seed and a fixed stream id, so each component stays reproducible
//! on its own regardless of what the others consume.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids for the sub-generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    Clip = 3,
    Eval = 4,
    Synthetic = 5,
}

pub fn sub_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Generator dedicated to one item (sample index) of a stream.
pub fn item_rng(seed: u64, stream: Stream, item: u64) -> ChaCha8Rng {
    let mixed = seed ^ item.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    rng.set_stream(stream as u64);
    rng
}
