//! Order-preserving map with a bounded worker count.
//!
//! With the `parallel` feature, `parallelism > 1` runs on a rayon pool of
//! that size. Parallel calls made from inside a pool reuse it, so nested
//! maps (grid cells, then chapters) share a single thread budget. Without
//! the feature, or with `parallelism <= 1`, items are processed in order on
//! the caller's thread.

pub fn map_ordered<T, R, F>(items: &[T], parallelism: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if parallelism > 1 && rayon::current_thread_index().is_some() {
            return items.par_iter().map(f).collect();
        }
        if parallelism > 1 && items.len() > 1 {
            match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
                Ok(pool) => return pool.install(|| items.par_iter().map(&f).collect()),
                Err(e) => tracing::warn!("falling back to sequential execution: {e}"),
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = parallelism;
    items.iter().map(f).collect()
}
