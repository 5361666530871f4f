//! Worker pool shared by training and inference.

use std::sync::OnceLock;

use rayon::ThreadPool;

pub const THREADS_ENV: &str = "VOXREFINE_THREADS";

/// Worker count: `VOXREFINE_THREADS` when set to a positive integer,
/// otherwise the number of available cores.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn pool() -> &'static ThreadPool {
    static POOL: OnceLock<ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(thread_count())
            .thread_name(|i| format!("voxrefine-{i}"))
            .build()
            .expect("worker pool")
    })
}
