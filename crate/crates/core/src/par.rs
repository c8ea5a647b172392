//! Ordered map over independent jobs, data-parallel when the `parallel`
//! feature is enabled and sequential otherwise.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    Sequential,
    /// Falls back to sequential execution without the `parallel` feature.
    #[default]
    Parallel,
}

impl ExecMode {
    /// Whether this mode actually runs on a thread pool in this build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}

/// Applies `f` to every item, returning results in input order.
pub fn map_ordered<T, R, F>(items: &[T], mode: ExecMode, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode == ExecMode::Parallel {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = mode;
    items.iter().map(f).collect()
}

/// Runs `f` with parallel work capped at `threads` workers. `None` uses the
/// global pool (one worker per logical processor).
pub fn with_thread_limit<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads.filter(|n| *n > 0) {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            return pool.install(f);
        }
    }
    let _ = threads;
    f()
}

/// Parses a thread cap such as the value of `BEAMSCULPT_THREADS`.
pub fn parse_thread_limit(value: Option<&str>) -> Option<usize> {
    value
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
}
