//! Parallel trial execution.
//!
//! Trials are split into contiguous shards, one per worker. Each worker runs
//! its shard in order and the shards are concatenated by trial index, so the
//! result never depends on the worker count.

use rayon::prelude::*;

use crate::error::{invalid, Result};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "ANYSTAB_WORKERS";

pub fn workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Contiguous `[start, end)` trial ranges, as equal as possible.
pub fn shards(trials: u64, workers: usize) -> Vec<(u64, u64)> {
    let k = (workers as u64).clamp(1, trials.max(1));
    let base = trials / k;
    let extra = trials % k;
    let mut out = Vec::with_capacity(k as usize);
    let mut start = 0;
    for i in 0..k {
        let len = base + u64::from(i < extra);
        out.push((start, start + len));
        start += len;
    }
    out
}

/// Runs `f(trial)` for every trial and returns the results in trial order.
/// The first error in trial order wins.
pub fn run_trials<T, F>(trials: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    run_trials_with(trials, workers(), f)
}

pub fn run_trials_with<T, F>(trials: u64, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let parts = shards(trials, workers);
    let run_shard = |&(a, b): &(u64, u64)| -> Result<Vec<T>> { (a..b).map(&f).collect() };
    let per_shard: Vec<Result<Vec<T>>> = if parts.len() <= 1 {
        parts.iter().map(run_shard).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parts.len())
            .build()
            .map_err(|e| invalid("workers", e.to_string()))?;
        pool.install(|| parts.par_iter().map(run_shard).collect())
    };
    let mut out = Vec::with_capacity(trials as usize);
    for shard in per_shard {
        out.extend(shard?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn shards_cover_in_order() {
        for trials in [1u64, 7, 100] {
            for w in [1usize, 3, 8, 200] {
                let s = shards(trials, w);
                assert_eq!(s[0].0, 0);
                assert_eq!(s.last().unwrap().1, trials);
                assert!(s.windows(2).all(|p| p[0].1 == p[1].0));
                let lens: Vec<u64> = s.iter().map(|(a, b)| b - a).collect();
                assert!(lens.iter().max().unwrap() - lens.iter().min().unwrap() <= 1);
            }
        }
    }

    #[test]
    fn result_does_not_depend_on_workers() {
        let f = |t: u64| Ok(crate::rng::splitmix64(t));
        let one = run_trials_with(57, 1, f).unwrap();
        let four = run_trials_with(57, 4, f).unwrap();
        assert_eq!(one, four);
        assert_eq!(one[10], crate::rng::splitmix64(10));
    }

    #[test]
    fn first_error_in_trial_order() {
        let f = |t: u64| if t % 10 == 9 { Err(Error::Empty("boom")) } else { Ok(t) };
        assert_eq!(run_trials_with(40, 4, f).unwrap_err(), Error::Empty("boom"));
    }
}
