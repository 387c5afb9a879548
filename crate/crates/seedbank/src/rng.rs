//! Reproducible random streams.
//!
//! Every Monte Carlo routine in the crate draws replicate `i` from the ChaCha8
//! stream `i` of the generator seeded with the master seed. Results therefore
//! do not depend on how replicates are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for replicate `index` under `master_seed`.
pub fn stream_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}
