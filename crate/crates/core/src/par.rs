//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (on by default) work is spread over a rayon
//! pool; without it every helper degrades to a plain loop. Results are always
//! collected in index order, so output never depends on scheduling.

use serde::{Deserialize, Serialize};

/// How much parallelism a caller asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parallelism {
    /// Plain iteration on the calling thread.
    Sequential,
    /// A dedicated pool with this many worker threads.
    Threads(usize),
    /// Whatever the ambient rayon pool provides.
    #[default]
    Auto,
}

impl Parallelism {
    pub fn from_threads(n: usize) -> Self {
        if n <= 1 {
            Parallelism::Sequential
        } else {
            Parallelism::Threads(n)
        }
    }

    pub fn is_sequential(self) -> bool {
        matches!(self, Parallelism::Sequential) || !cfg!(feature = "parallel")
    }
}

/// Maps `f` over `0..n`, preserving index order in the output.
pub fn map_indexed<T, F>(n: usize, parallelism: Parallelism, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if parallelism.is_sequential() {
        return (0..n).map(f).collect();
    }
    imp::map_indexed(n, parallelism, f)
}

#[cfg(feature = "parallel")]
mod imp {
    use super::Parallelism;
    use rayon::prelude::*;

    pub(super) fn map_indexed<T, F>(n: usize, parallelism: Parallelism, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        let run = || (0..n).into_par_iter().map(&f).collect::<Vec<T>>();
        match parallelism {
            Parallelism::Threads(threads) => match rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
            {
                Ok(pool) => pool.install(run),
                Err(_) => run(),
            },
            _ => run(),
        }
    }
}

#[cfg(not(feature = "parallel"))]
mod imp {
    use super::Parallelism;

    pub(super) fn map_indexed<T, F>(n: usize, _parallelism: Parallelism, f: F) -> Vec<T>
    where
        F: Fn(usize) -> T,
    {
        (0..n).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        for p in [
            Parallelism::Sequential,
            Parallelism::Threads(4),
            Parallelism::Auto,
        ] {
            let out = map_indexed(100, p, |i| i * i);
            assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
        }
    }

    #[test]
    fn from_threads() {
        assert_eq!(Parallelism::from_threads(0), Parallelism::Sequential);
        assert_eq!(Parallelism::from_threads(1), Parallelism::Sequential);
        assert_eq!(Parallelism::from_threads(8), Parallelism::Threads(8));
    }
}
