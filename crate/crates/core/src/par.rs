//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) work is fanned out over rayon's
//! current pool; without it every helper runs on the calling thread. Results
//! never depend on the worker count: work is split into fixed-size chunks
//! whose boundaries depend only on the problem size, and partial results are
//! combined in chunk order.

/// Rows per chunk for reductions. Fixed so that floating-point reductions are
/// bit-stable regardless of how many workers execute the chunks.
pub const REDUCE_CHUNK: usize = 64;

/// Evaluates `f(i)` for `i in 0..n`, preserving index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Fallible variant of [`map_indexed`]. Returns the error with the lowest index.
pub fn try_map_indexed<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    let results = map_indexed(n, f);
    results.into_iter().collect()
}

/// Splits `0..n` into chunks of [`REDUCE_CHUNK`], maps every chunk to a partial
/// accumulator with `chunk_fn(range)`, then folds the partials in chunk order
/// with `combine`.
pub fn chunked_reduce<A, F, C>(n: usize, chunk_fn: F, mut combine: C) -> Option<A>
where
    A: Send,
    F: Fn(std::ops::Range<usize>) -> A + Sync + Send,
    C: FnMut(A, A) -> A,
{
    let chunks = n.div_ceil(REDUCE_CHUNK);
    let partials = map_indexed(chunks, |c| {
        let start = c * REDUCE_CHUNK;
        let end = (start + REDUCE_CHUNK).min(n);
        chunk_fn(start..end)
    });
    let mut iter = partials.into_iter();
    let first = iter.next()?;
    Some(iter.fold(first, &mut combine))
}

/// Runs `f` on a pool capped at `workers` threads (0 means the default pool).
/// Without the `parallel` feature this simply calls `f`.
pub fn with_workers<R, F>(workers: usize, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    {
        if workers == 0 {
            return f();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        f()
    }
}

/// Number of worker threads available to the helpers in this module.
pub fn current_workers() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
