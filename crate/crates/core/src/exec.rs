//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (on by default) [`Execution::Parallel`] fans work
//! out over the rayon pool. Without it both variants run sequentially, so callers
//! never need their own `cfg` switches.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How a batch of independent work items is executed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
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

impl Execution {
    /// True when this variant actually runs on the thread pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Maps `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Maps `f` over `0..len`, preserving order. `min_chunk` bounds how finely the
    /// range is split so tiny per-item work does not drown in scheduling overhead.
    pub fn map_range<R, F>(self, len: usize, min_chunk: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel && len > min_chunk {
            return (0..len)
                .into_par_iter()
                .with_min_len(min_chunk.max(1))
                .map(f)
                .collect();
        }
        let _ = min_chunk;
        (0..len).map(f).collect()
    }

    /// Fills `out` in fixed-size rows, calling `f(row_index, row)` for each.
    pub fn for_each_row<F>(self, out: &mut [f64], row_len: usize, min_rows: usize, f: F)
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        if row_len == 0 {
            return;
        }
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel && out.len() / row_len > min_rows {
            out.par_chunks_mut(row_len)
                .with_min_len(min_rows.max(1))
                .enumerate()
                .for_each(|(t, row)| f(t, row));
            return;
        }
        let _ = min_rows;
        out.chunks_mut(row_len)
            .enumerate()
            .for_each(|(t, row)| f(t, row));
    }
}
