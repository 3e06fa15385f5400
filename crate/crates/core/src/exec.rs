//! Replica-parallel execution with order-independent results.
//!
//! Replicas are mapped in parallel and collected in index order, and every
//! reduction downstream runs sequentially over that ordered vector. The
//! number of worker threads therefore never changes a result bit.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Evaluates `f(0), …, f(count - 1)` in parallel and returns them in index
/// order. Any failing replica turns the whole call into an error.
pub fn replicate<T, F>(count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..count as u64).into_par_iter().map(f).collect()
}

/// Runs `f` on a dedicated pool of `workers` threads (`0` means the rayon
/// default).
pub fn with_workers<R, F>(workers: usize, f: F) -> Result<R>
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}
