//! Row-parallel execution helpers.
//!
//! With the `parallel` feature the closures below are spread over the rayon
//! pool; without it, or after [`set_parallel`]`(false)`, they run in order on
//! the calling thread. Every row is produced by the same closure with the
//! same inputs in both modes, so results are bit-identical.

use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

static PARALLEL: AtomicBool = AtomicBool::new(true);

/// Rows per rayon task; below this the split overhead dominates.
#[cfg(feature = "parallel")]
const MIN_ROWS_PER_TASK: usize = 32;

/// Enable or disable the rayon path at runtime. No effect without the
/// `parallel` feature.
pub fn set_parallel(enabled: bool) {
    PARALLEL.store(enabled, Ordering::Relaxed);
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && PARALLEL.load(Ordering::Relaxed)
}

/// Calls `f(row_index, row)` for every `width`-wide row of `data`.
pub fn for_each_row<F>(data: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Send + Sync,
{
    if width == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if is_parallel() {
        data.par_chunks_mut(width)
            .with_min_len(MIN_ROWS_PER_TASK)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
        return;
    }
    data.chunks_mut(width)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

/// `(0..n).map(f).collect()`, possibly in parallel. Output order is index order.
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Coarse-grained variant of [`map_indices`] for a handful of heavy,
/// independent jobs (trials, sweep points, pipeline seeds).
pub fn map_jobs<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        return (0..n).into_par_iter().with_max_len(1).map(f).collect();
    }
    (0..n).map(f).collect()
}
