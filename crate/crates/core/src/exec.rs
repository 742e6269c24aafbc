//! Trial-level data parallelism.
//!
//! With the `parallel` feature (default) [`Execution::Parallel`] fans work out
//! over the rayon pool; without it every strategy runs sequentially. Results
//! are always returned in index order, so reductions over them are
//! deterministic regardless of worker count.

/// Environment variable overriding the worker count of the global pool.
pub const WORKERS_ENV: &str = "HYNE_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Evaluates `f(0..n)` and returns the results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Execution::Sequential => (0..n).map(f).collect(),
            Execution::Parallel => par_map(n, f),
        }
    }

    /// Like [`Execution::map`] but short-circuits on the first error in index order.
    pub fn try_map<T, E, F>(self, n: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        self.map(n, f).into_iter().collect()
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Configures the global worker pool from `HYNE_WORKERS` (or `explicit`).
///
/// Returns the worker count in effect. Calling it after the pool has been
/// initialised leaves the existing pool untouched.
pub fn configure_workers(explicit: Option<usize>) -> usize {
    let requested = explicit.or_else(|| {
        std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0)
    });
    init_pool(requested)
}

#[cfg(feature = "parallel")]
fn init_pool(requested: Option<usize>) -> usize {
    if let Some(n) = requested {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    rayon::current_num_threads()
}

#[cfg(not(feature = "parallel"))]
fn init_pool(_requested: Option<usize>) -> usize {
    1
}
