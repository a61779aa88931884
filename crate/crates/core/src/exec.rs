//! Execution policy for the data-parallel inner loops.
//!
//! With the `parallel` feature (default) the [`Execution::Parallel`] policy
//! dispatches onto the rayon global pool. Without it, every policy runs
//! sequentially. Either way the results are identical: work items are
//! independent and outputs are written in index order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
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
    /// True when this policy will actually fan out across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Maps `f` over `0..n` and collects the results in index order.
    pub fn map_indices<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Fills `out` row by row; `f(y, row)` receives each row slice of length `width`.
    pub fn fill_rows<T, F>(self, out: &mut [T], width: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        if width == 0 {
            return;
        }
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            out.par_chunks_mut(width)
                .enumerate()
                .for_each(|(y, row)| f(y, row));
            return;
        }
        out.chunks_mut(width)
            .enumerate()
            .for_each(|(y, row)| f(y, row));
    }
}

/// Configures the global rayon pool size. Returns false if the pool was
/// already initialised or the crate was built without `parallel`.
pub fn init_thread_pool(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policies_agree() {
        let a = Execution::Sequential.map_indices(1000, |i| (i as f64).sqrt());
        let b = Execution::Parallel.map_indices(1000, |i| (i as f64).sqrt());
        assert_eq!(a, b);

        let mut x = vec![0usize; 12];
        let mut y = vec![0usize; 12];
        Execution::Sequential.fill_rows(&mut x, 4, |r, row| {
            row.iter_mut()
                .enumerate()
                .for_each(|(c, v)| *v = r * 10 + c)
        });
        Execution::Parallel.fill_rows(&mut y, 4, |r, row| {
            row.iter_mut()
                .enumerate()
                .for_each(|(c, v)| *v = r * 10 + c)
        });
        assert_eq!(x, y);
        assert_eq!(x[5], 11);
    }
}
