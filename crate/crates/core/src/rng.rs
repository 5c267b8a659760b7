//! Counter-based random streams.
//!
//! Replicate `k` of a run seeded with `master_seed` always reads the ChaCha
//! stream `k` under the key derived from `master_seed`, so results never
//! depend on scheduling or on the number of workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn replicate_rng(master_seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}
