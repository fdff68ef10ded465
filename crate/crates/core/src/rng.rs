//! Deterministic seed splitting for replicated experiments.
//!
//! Every randomized routine in the crate is driven by a 64-bit master seed.
//! Replica i draws from the ChaCha8 stream i of the cipher keyed by the
//! master seed, and named experiments derive their own master seeds through a
//! SplitMix64 mix, so no two experiments or replicas share a stream. Batch
//! helpers aggregate either in fixed replica order or through exact integer
//! merges, which makes results bit-identical regardless of the worker count.

use rand_chacha::rand_core::SeedableRng;
pub use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// The random source handed to one replica: stream `replica` of the ChaCha8
/// cipher keyed from `seed`.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Master seed for a named sub-experiment: a SplitMix64 mix of the master
/// seed and the experiment's salt.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    splitmix64(seed ^ splitmix64(salt))
}

/// Runs `reps` independent replicas and collects their results in replica
/// order (independent of the rayon worker count).
pub fn par_collect<T, F>(seed: u64, reps: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut ChaCha8Rng) -> T + Sync,
{
    (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(seed, i);
            f(i, &mut rng)
        })
        .collect()
}

/// Counts replicas satisfying a predicate. Integer addition is exact and
/// order-free, so the count does not depend on scheduling.
pub fn par_count<F>(seed: u64, reps: u64, f: F) -> u64
where
    F: Fn(u64, &mut ChaCha8Rng) -> bool + Sync,
{
    (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(seed, i);
            u64::from(f(i, &mut rng))
        })
        .sum()
}

/// Accumulates one histogram over all replicas; per-replica bin indices are
/// merged by exact integer addition.
pub fn par_histogram<F>(seed: u64, reps: u64, bins: usize, f: F) -> Vec<u64>
where
    F: Fn(u64, &mut ChaCha8Rng) -> usize + Sync,
{
    (0..reps)
        .into_par_iter()
        .fold(
            || vec![0u64; bins],
            |mut hist, i| {
                let mut rng = replica_rng(seed, i);
                let bin = f(i, &mut rng);
                hist[bin] += 1;
                hist
            },
        )
        .reduce(
            || vec![0u64; bins],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        )
}
