//! Parallel-map helpers with a sequential fallback.
//!
//! Every parallel stage in this crate is a pure map over an index range whose
//! results are then combined in index order by the (sequential) caller, so
//! results are bit-identical with and without the `parallel` feature and for
//! any thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn par_map<U: Send, F: Fn(usize) -> U + Sync + Send>(n: usize, f: F) -> Vec<U> {
    (0..n).into_par_iter().map(f).collect()
}

/// Maps `f` over `0..n`, collecting results in index order.
#[cfg(not(feature = "parallel"))]
pub fn par_map<U, F: Fn(usize) -> U>(n: usize, f: F) -> Vec<U> {
    (0..n).map(f).collect()
}

/// Fallible variant of [`par_map`]; returns the first error in index order.
#[cfg(feature = "parallel")]
pub fn try_par_map<U: Send, E: Send, F: Fn(usize) -> Result<U, E> + Sync + Send>(
    n: usize,
    f: F,
) -> Result<Vec<U>, E> {
    let results: Vec<Result<U, E>> = (0..n).into_par_iter().map(f).collect();
    results.into_iter().collect()
}

/// Fallible variant of [`par_map`]; returns the first error in index order.
#[cfg(not(feature = "parallel"))]
pub fn try_par_map<U, E, F: Fn(usize) -> Result<U, E>>(n: usize, f: F) -> Result<Vec<U>, E> {
    (0..n).map(f).collect()
}

/// Number of worker threads the parallel maps will use.
pub fn num_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
