//! Deterministic parallel replication.

use gfx_core::rng;
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::{CliError, Result};

pub fn pool(threads: usize) -> Result<ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError::Pool(e.to_string()))
}

/// Seed of replica `i`.
pub fn replica_seed(seed: u64, i: usize) -> u64 {
    rng::derive(seed, rng::domain::REPLICA, i as u64)
}

/// Runs `task(i, seed_i)` for `i < n` on `pool` and returns the results in
/// replica order, so the output does not depend on the thread count.
pub fn replicate<T, F>(pool: &ThreadPool, n: usize, seed: u64, task: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, u64) -> Result<T> + Sync,
{
    pool.install(|| (0..n).into_par_iter().map(|i| task(i, replica_seed(seed, i))).collect())
}

/// Ordered parallel map over a slice.
pub fn map_ordered<S, T, F>(pool: &ThreadPool, items: &[S], f: F) -> Result<Vec<T>>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> Result<T> + Sync,
{
    pool.install(|| items.par_iter().map(&f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn independent_of_thread_count() {
        let task = |i: usize, s: u64| -> Result<f64> {
            let mut g = rng::stream(s, rng::domain::AUX, 0);
            Ok(g.random::<f64>() + i as f64)
        };
        let a = replicate(&pool(1).unwrap(), 257, 9, task).unwrap();
        let b = replicate(&pool(4).unwrap(), 257, 9, task).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_replica_is_direct_call() {
        let task = |_: usize, s: u64| -> Result<u64> { Ok(s) };
        let a = replicate(&pool(2).unwrap(), 1, 5, task).unwrap();
        assert_eq!(a, vec![replica_seed(5, 0)]);
    }
}
