use nmm_core::Executor;
use rayon::prelude::*;

/// Environment variable that overrides the default worker count.
pub const THREADS_ENV: &str = "NMM_THREADS";

/// Worker count: `NMM_THREADS` when set to a positive integer, otherwise
/// the machine's available parallelism.
pub fn default_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Evaluates towers on a dedicated rayon pool. Results come back in tower
/// order, so the caller's fixed-order reduction is unaffected.
#[derive(Debug)]
pub struct ThreadPool {
    pool: rayon::ThreadPool,
}

impl ThreadPool {
    pub fn new(threads: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .thread_name(|i| format!("nmm-tower-{i}"))
            .build()
            .expect("failed to start worker threads");
        ThreadPool { pool }
    }

    pub fn from_env() -> Self {
        Self::new(default_threads())
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for ThreadPool {
    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync,
    {
        self.pool
            .install(|| items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect())
    }

    fn map_mut<T, R, F>(&self, items: &mut [T], f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(usize, &mut T) -> R + Sync,
    {
        self.pool.install(|| {
            items
                .par_iter_mut()
                .enumerate()
                .map(|(i, t)| f(i, t))
                .collect()
        })
    }
}
