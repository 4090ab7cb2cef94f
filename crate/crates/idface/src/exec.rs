//! Data-parallel execution helpers with a sequential fallback.
//!
//! The heavy loops in this crate — per-column Paillier encryption during
//! database construction, per-batch homomorphic scoring, per-trial Monte-Carlo
//! estimation, per-identity share scoring — are all independent maps over an
//! index range. They funnel through this module so the whole crate switches
//! between rayon and plain iterators at one point.
//!
//! With the `parallel` feature (default) the `map_*` functions run on the
//! global rayon pool; without it they alias the `*_seq` versions. The `*_seq`
//! functions are always compiled and exported so the criterion bench suite can
//! compare both execution modes inside a single binary.
//!
//! Every function collects results **in index order**, and callers reduce the
//! collected vector sequentially, so outputs are bit-identical whichever mode
//! ran and however many threads the pool has. Randomized callers get the same
//! guarantee by deriving one RNG stream per index from a master seed instead
//! of sharing a stream across iterations.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::Result;

/// Map `f` over `0..n`, collecting in index order (parallel when enabled).
pub fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_seq(n, f)
    }
}

/// Sequential twin of [`map_indexed`]; always available for comparison.
pub fn map_indexed_seq<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Fallible map over `0..n`; first error wins (parallel when enabled).
pub fn try_map_indexed<U, F>(n: usize, f: F) -> Result<Vec<U>>
where
    U: Send,
    F: Fn(usize) -> Result<U> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        try_map_indexed_seq(n, f)
    }
}

/// Sequential twin of [`try_map_indexed`].
pub fn try_map_indexed_seq<U, F>(n: usize, f: F) -> Result<Vec<U>>
where
    F: Fn(usize) -> Result<U>,
{
    (0..n).map(f).collect()
}

/// Map `f` over a slice, collecting in index order (parallel when enabled).
pub fn map_slice<'a, T, U, F>(items: &'a [T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&'a T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_slice_seq(items, f)
    }
}

/// Sequential twin of [`map_slice`].
pub fn map_slice_seq<'a, T, U, F>(items: &'a [T], f: F) -> Vec<U>
where
    F: Fn(&'a T) -> U,
{
    items.iter().map(f).collect()
}

/// Size the global thread pool. `0` keeps the library default (all logical
/// cores). Calling it after the pool is already live is a silent no-op, which
/// is fine for a CLI that configures the pool once at startup. Without the
/// `parallel` feature this does nothing; execution is sequential regardless.
pub fn configure_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    {
        if threads > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
    }
}

/// `true` when this build executes the `map_*` entry points on rayon.
pub const fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}
