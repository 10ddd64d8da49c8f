//! Chunked data-parallel execution with a sequential fallback.
//!
//! Work is always split into the same fixed-size chunks, each with its own
//! random stream, so [`Execution::Parallel`] and [`Execution::Sequential`]
//! produce bit-identical results. Without the `parallel` feature, parallel
//! requests run sequentially.

/// Rows processed per work item by batched samplers.
pub const CHUNK_ROWS: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// Whether work will actually be spread over a thread pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Evaluates `f(0..n)` and returns results in index order.
pub fn map_indexed<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// `(start, len)` pairs covering `0..n` in chunks of `chunk` rows.
pub fn chunk_ranges(n: usize, chunk: usize) -> Vec<(usize, usize)> {
    assert!(chunk > 0);
    (0..n).step_by(chunk).map(|start| (start, chunk.min(n - start))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_cover_input() {
        assert_eq!(chunk_ranges(5, 2), vec![(0, 2), (2, 2), (4, 1)]);
        assert!(chunk_ranges(0, 3).is_empty());
    }

    #[test]
    fn modes_agree() {
        let a = map_indexed(100, Execution::Parallel, |i| i * i);
        let b = map_indexed(100, Execution::Sequential, |i| i * i);
        assert_eq!(a, b);
    }
}
