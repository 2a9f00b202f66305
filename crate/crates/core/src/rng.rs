//! Deterministic per-task random streams.
//!
//! Every task draws from a ChaCha8 stream keyed by the master seed and a stream
//! id derived from the task's coordinates, so results do not depend on which
//! worker runs a task or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TaskRng = ChaCha8Rng;

/// The stream `stream_id` of the generator seeded with `seed`.
pub fn stream(seed: u64, stream_id: u64) -> TaskRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Stream for a task identified by a purpose tag and two indices.
pub fn task_stream(seed: u64, purpose: u64, i: u64, j: u64) -> TaskRng {
    stream(seed, mix(mix(mix(purpose) ^ i) ^ j.rotate_left(32)))
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
