//! Thin wrappers over rayon so the crate still builds (serially) without the
//! `parallel` feature, e.g. for wasm32.
//!
//! Every helper writes to disjoint per-index slots, so results never depend
//! on the worker count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `f(row_index, row)` to each `width`-sized chunk of `data`.
pub fn for_each_row_mut<T, F>(data: &mut [T], width: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if width == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(width).enumerate().for_each(|(r, row)| f(r, row));
    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(width).enumerate().for_each(|(r, row)| f(r, row));
}

/// Ordered map over `0..n`.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Ordered map over a slice.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
