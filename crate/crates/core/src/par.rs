//! Data-parallel fan-out over independent trials.
//!
//! With the `parallel` feature the work runs on rayon; without it (or with
//! [`ExecMode::Sequential`]) it is a plain loop. Results always come back in
//! index order, so reports do not depend on scheduling.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

pub const THREADS_ENV: &str = "STEERING_THREADS";

/// Thread cap from `STEERING_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|n| *n > 0)
}

/// `(0..n).map(f)`, possibly in parallel.
pub fn map_indexed<T, F>(n: usize, mode: ExecMode, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Runs `f` inside a pool capped at `threads` workers (global pool if `None`).
pub fn with_threads<R, F>(threads: Option<usize>, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            return pool.install(f);
        }
    }
    let _ = threads;
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_keep_order() {
        let seq = map_indexed(100, ExecMode::Sequential, |i| i * i);
        let par = map_indexed(100, ExecMode::Parallel, |i| i * i);
        assert_eq!(seq, par);
        assert_eq!(with_threads(Some(2), || map_indexed(5, ExecMode::Parallel, |i| i)), vec![0, 1, 2, 3, 4]);
    }
}
