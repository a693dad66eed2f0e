//! Counter-based random streams: every unit of work draws from a stream
//! fixed by `(seed, index)`, so results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Trials per stream in [`count_successes`].
pub const BATCH_SIZE: u64 = 4096;

pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs `trials` Bernoulli trials split into fixed batches, batch `b`
/// drawing from `substream(seed, b)`. `batch` receives the stream and
/// the number of trials in that batch and returns its success count.
pub fn count_successes<F>(trials: u64, seed: u64, batch: F) -> u64
where
    F: Fn(&mut ChaCha8Rng, u64) -> u64 + Sync,
{
    let batches = trials.div_ceil(BATCH_SIZE);
    (0..batches)
        .into_par_iter()
        .map(|b| {
            let n = BATCH_SIZE.min(trials - b * BATCH_SIZE);
            let mut rng = substream(seed, b);
            batch(&mut rng, n)
        })
        .sum()
}
