use patchdyn_core::exec::Executor;
use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

/// Fans work items out over a rayon pool. Results keep index order.
pub struct Rayon {
    pool: ThreadPool,
}

impl Rayon {
    pub fn new(threads: usize) -> Self {
        let pool = ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        Rayon { pool }
    }

    /// `PATCHDYN_THREADS` if set and positive, else every core.
    pub fn from_env() -> Self {
        let threads = std::env::var("PATCHDYN_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|n| *n > 0)
            .unwrap_or(0);
        Rayon::new(threads)
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Rayon {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_index_order() {
        let out = Rayon::new(4).map(1000, |i| i * 2);
        assert!(out.iter().enumerate().all(|(i, v)| *v == 2 * i));
    }
}
