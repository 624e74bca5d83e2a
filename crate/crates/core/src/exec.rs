//! Thin indirection over rayon so every data-parallel section of the crate has
//! a sequential twin. With the `parallel` feature disabled the same entry
//! points run plain loops; outputs are identical in both modes because every
//! reduction is order-preserving.

/// Maps `f` over `items`, preserving input order in the output.
#[cfg(feature = "parallel")]
pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

/// Runs `f` on a dedicated pool of `workers` threads (1 = run inline).
///
/// Used where the caller owns an explicit worker count, e.g. enumeration
/// subtree sweeps. Panics if the pool cannot be built, which only happens on
/// resource exhaustion.
#[cfg(feature = "parallel")]
pub fn with_pool<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    if workers <= 1 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("failed to build worker pool");
    pool.install(f)
}

#[cfg(not(feature = "parallel"))]
pub fn with_pool<R>(_workers: usize, f: impl FnOnce() -> R) -> R {
    f()
}
