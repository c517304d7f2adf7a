//! Worker-pool sizing shared by the parallel code paths.
//!
//! `PGIKIT_THREADS` caps the pool; 0 or unset picks the hardware default.
//! All parallel loops collect results in input order, so the thread count
//! never changes the bytes a run produces.

use std::sync::OnceLock;

static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();

pub(crate) fn pool() -> &'static rayon::ThreadPool {
    POOL.get_or_init(|| {
        let threads = std::env::var("PGIKIT_THREADS")
            .ok()
            .and_then(|s| s.trim().parse::<usize>().ok())
            .unwrap_or(0);
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("failed to build worker pool")
    })
}
