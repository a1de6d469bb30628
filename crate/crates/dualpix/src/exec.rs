//! Row-parallel execution with a sequential fallback.
//!
//! With the `parallel` feature (default) the hot per-pixel loops fan out over
//! rows through rayon. The mode can be flipped at runtime, which the bench
//! suite uses to compare both paths in one binary; without the feature the
//! crate compiles with no rayon dependency and always runs sequentially.
//!
//! Every caller is written so the result is bit-identical in both modes:
//! rows are independent and whole-image reductions fold row partials in row
//! order.

use std::sync::atomic::{AtomicU8, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

static MODE: AtomicU8 = AtomicU8::new(1);

/// Selects the execution mode for subsequent calls. With the `parallel`
/// feature disabled this is a no-op and everything runs sequentially.
pub fn set_execution(mode: ExecMode) {
    MODE.store(mode as u8, Ordering::Relaxed);
}

pub fn execution() -> ExecMode {
    if cfg!(feature = "parallel") && MODE.load(Ordering::Relaxed) == 1 {
        ExecMode::Parallel
    } else {
        ExecMode::Sequential
    }
}

/// Runs `f(row_index, row_slice)` over consecutive `chunk` sized pieces of
/// `data`, in parallel when enabled.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    assert!(chunk > 0);
    match execution() {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            data.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
        }
        _ => {
            for (i, c) in data.chunks_mut(chunk).enumerate() {
                f(i, c);
            }
        }
    }
}

/// Maps `f` over `0..n` preserving index order in the output.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match execution() {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Sum of per-index partials, folded in index order so the result does not
/// depend on thread scheduling.
pub fn sum_ordered<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_indexed(n, f).into_iter().sum()
}
