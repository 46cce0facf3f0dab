//! Index-parallel map with a sequential fallback when the `parallel` feature
//! is off. Output order always follows the index order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub(crate) fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Installs a global worker pool of `threads` workers. No-op without the
/// `parallel` feature or when a pool already exists.
pub fn init_workers(threads: Option<usize>) {
    #[cfg(feature = "parallel")]
    {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            builder = builder.num_threads(n);
        }
        let _ = builder.build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}
