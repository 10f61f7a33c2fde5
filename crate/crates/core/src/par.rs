//! Data-parallel loop helpers.
//!
//! With the `parallel` feature (default) these dispatch to rayon; without it
//! they run the same closures sequentially. Reductions are always finished in
//! a fixed order so results do not depend on the worker count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fills `out` row by row; `f(i, row)` writes row `i` (length `width`).
pub(crate) fn fill_rows<T, F>(out: &mut [T], width: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    out.par_chunks_mut(width)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
    #[cfg(not(feature = "parallel"))]
    out.chunks_mut(width).enumerate().for_each(|(i, row)| f(i, row));
}

/// Sum of `f(i)` over `0..count`, with per-item partials added in index order.
pub(crate) fn ordered_sum<F>(count: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_indices(count, f).into_iter().sum()
}

/// `(0..count).map(f).collect()`, possibly in parallel. Output order is the
/// index order.
pub fn map_indices<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}

/// True when the crate was built with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
