//! Element-loop execution policy.
//!
//! All heavy loops (element kernels, sweep points) map an index range to
//! per-item results that are then consumed in index order. Results are
//! therefore bit-identical between [`Execution::Sequential`] and
//! [`Execution::Parallel`]; only the wall time differs.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Runs on the global rayon pool. Falls back to sequential execution
    /// when the crate is built without the `parallel` feature.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// `(0..n).map(f).collect()`, possibly in parallel, preserving order.
pub fn map_indexed<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Order-preserving map over contiguous chunks of `0..n`; used where the per
/// item result is small and the per-chunk fold keeps allocation down.
pub fn map_chunks<R, F>(exec: Execution, n: usize, chunk: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(std::ops::Range<usize>) -> R + Sync + Send,
{
    let chunk = chunk.max(1);
    let nchunks = n.div_ceil(chunk);
    map_indexed(exec, nchunks, |c| {
        let start = c * chunk;
        f(start..(start + chunk).min(n))
    })
}
