//! Trial scheduling.
//!
//! Monte Carlo trials run through [`run_trials`], which returns results in
//! trial order whatever the schedule. Each trial draws from its own
//! ChaCha stream keyed by `(seed, trial index)`, so sequential and parallel
//! runs produce bit-identical reports. Without the `parallel` feature,
//! [`Execution::Parallel`] falls back to the sequential loop.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

/// Random stream for one trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Evaluates `f(0..trials)` and returns the results in index order.
pub fn run_trials<T, F>(trials: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..trials).into_par_iter().map(f).collect()
        }
        _ => (0..trials).map(f).collect(),
    }
}

/// Runs `f` on a pool of `threads` workers (`threads <= 1` runs inline).
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if threads > 1 {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            return pool.install(f);
        }
    }
    let _ = threads;
    f()
}

/// `Parallel` when more than one thread is requested.
pub fn execution_for_threads(threads: usize) -> Execution {
    if threads > 1 {
        Execution::Parallel
    } else {
        Execution::Sequential
    }
}
