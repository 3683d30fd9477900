//! Execution-mode switch for the data-parallel kernels.
//!
//! Every parallel loop in the crate goes through these helpers. Each work
//! item is computed independently with a fixed inner summation order, so the
//! parallel and sequential paths produce bit-identical results. Without the
//! `parallel` feature, [`ExecMode::Parallel`] silently runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

/// `(0..n).map(f).collect()`, possibly in parallel. Output order is by index.
pub fn map_indices<T, F>(mode: ExecMode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => (0..n).into_par_iter().map(f).collect(),
        _ => (0..n).map(f).collect(),
    }
}

/// Calls `f(row_index, row)` for each `width`-sized chunk of `buf`.
pub fn for_each_row_mut<T, F>(mode: ExecMode, buf: &mut [T], width: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if width == 0 {
        return;
    }
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => buf
            .par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| f(i, row)),
        _ => buf
            .chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| f(i, row)),
    }
}
