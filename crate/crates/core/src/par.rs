//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) [`Execution::Parallel`] fans work out
//! on the rayon global pool. Without it every call runs sequentially. Results
//! are always collected in input order, so both modes produce identical output.

use crate::numerics::Tensor;

/// Rows per shard when scoring a pool.
pub const SCORE_CHUNK_ROWS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// `(0..n).map(f)` in order, possibly in parallel.
pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Applies a per-row scorer shard by shard and concatenates the results.
pub fn score_rows<E, F>(exec: Execution, x: &Tensor, f: F) -> Result<Vec<f64>, E>
where
    E: Send,
    F: Fn(&Tensor) -> Result<Vec<f64>, E> + Sync + Send,
{
    let n = x.rows();
    let shards = n.div_ceil(SCORE_CHUNK_ROWS);
    if shards <= 1 {
        return f(x);
    }
    let parts = map_indexed(exec, shards, |s| {
        let start = s * SCORE_CHUNK_ROWS;
        f(&x.slice_rows(start, (start + SCORE_CHUNK_ROWS).min(n)))
    });
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}
