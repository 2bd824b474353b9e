//! Runtime switch between rayon data-parallel and sequential evaluation.
//!
//! Heavy loops (per-family likelihood terms, scores, simulation attempts,
//! replicate studies) go through [`map_collect`] / [`try_map_collect`].
//! Results are collected positionally and reduced afterwards in a fixed
//! order, so numbers are bit-identical whatever the thread count.
//!
//! With the `parallel` feature disabled, rayon is not compiled in and
//! everything runs sequentially.

use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

static PARALLEL: AtomicBool = AtomicBool::new(true);

/// Enable or disable data-parallel execution at runtime.
pub fn set_parallel(enabled: bool) {
    PARALLEL.store(enabled, Ordering::Relaxed);
}

/// Whether parallel execution is currently in effect.
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel") && PARALLEL.load(Ordering::Relaxed)
}

/// Configure the worker pool: 0 = library default, 1 = sequential,
/// N > 1 = rayon pool with N threads.
pub fn configure_threads(threads: usize) {
    match threads {
        0 => set_parallel(true),
        1 => set_parallel(false),
        _n => {
            set_parallel(true);
            #[cfg(feature = "parallel")]
            {
                // Ignore AlreadyInitialized: the global pool can only be
                // built once per process.
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(_n)
                    .build_global();
            }
        }
    }
}

pub(crate) fn try_map_collect<T, U, E, F>(items: &[T], f: F) -> Result<Vec<U>, E>
where
    T: Sync,
    U: Send,
    E: Send,
    F: Fn(&T) -> Result<U, E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        return items.par_iter().map(&f).collect();
    }
    items.iter().map(f).collect()
}

/// Map over `0..n`, collecting in index order.
pub(crate) fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        return (0..n).into_par_iter().map(&f).collect();
    }
    (0..n).map(f).collect()
}
