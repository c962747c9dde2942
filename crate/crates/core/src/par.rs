//! Data-parallel helpers with a sequential fallback.
//!
//! All parallel work in this crate is map-only: each task produces an
//! independent value and results are collected in input order. Reductions are
//! performed sequentially afterwards, so results are bit-identical regardless of
//! the execution mode or thread count.

/// How independent tasks are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// `Parallel` when the crate is built with the `parallel` feature, else `Sequential`.
    pub fn available() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    fn effective(self) -> Self {
        if cfg!(feature = "parallel") {
            self
        } else {
            Execution::Sequential
        }
    }
}

/// Map `f` over `items`, preserving order.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec.effective() {
        Execution::Sequential => items.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel => unreachable!(),
    }
}

/// Map `f` over `0..n`, preserving order.
pub fn map_range<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match exec.effective() {
        Execution::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel => unreachable!(),
    }
}

/// Run two closures, concurrently when parallel execution is enabled.
pub fn join<A, B, RA, RB>(exec: Execution, a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    match exec.effective() {
        Execution::Sequential => (a(), b()),
        #[cfg(feature = "parallel")]
        Execution::Parallel => rayon::join(a, b),
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel => unreachable!(),
    }
}

/// Run `f` inside a pool limited to `jobs` threads (or the global pool when `jobs` is `None`).
pub fn with_jobs<R, F>(jobs: Option<usize>, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    {
        if let Some(k) = jobs {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build() {
                return pool.install(f);
            }
        }
        f()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        f()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = map(Execution::Sequential, &xs, |x| x * x + 1);
        let b = map(Execution::Parallel, &xs, |x| x * x + 1);
        assert_eq!(a, b);
        let c = map_range(Execution::Parallel, 17, |i| i as f64 * 0.5);
        assert_eq!(c[16], 8.0);
        let (p, q) = join(Execution::Parallel, || 1, || 2);
        assert_eq!((p, q), (1, 2));
        assert_eq!(with_jobs(Some(2), || 5), 5);
    }
}
