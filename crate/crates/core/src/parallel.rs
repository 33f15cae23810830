//! Order-preserving map over independent jobs (replications, holdouts).
//! Runs on the current rayon pool with the `parallel` feature, sequentially
//! otherwise.

use crate::error::Result;

#[cfg(feature = "parallel")]
pub(crate) fn map_collect<T, R, F>(items: Vec<T>, f: F) -> Result<Vec<R>>
where
    T: Send,
    R: Send,
    F: Fn(T) -> Result<R> + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_collect<T, R, F>(items: Vec<T>, f: F) -> Result<Vec<R>>
where
    F: Fn(T) -> Result<R>,
{
    items.into_iter().map(f).collect()
}

/// Like [`map_collect`], but keeps per-item failures.
#[cfg(feature = "parallel")]
pub(crate) fn map_all<T, R, F>(items: Vec<T>, f: F) -> Vec<Result<R>>
where
    T: Send,
    R: Send,
    F: Fn(T) -> Result<R> + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_all<T, R, F>(items: Vec<T>, f: F) -> Vec<Result<R>>
where
    F: Fn(T) -> Result<R>,
{
    items.into_iter().map(f).collect()
}
