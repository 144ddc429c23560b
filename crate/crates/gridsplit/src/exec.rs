//! Threaded executor and wall clock for the engine.

use std::time::Instant;

use gridsplit_core::engine::{Clock, ParallelMap};
use num_complex::Complex64;

/// Rayon-backed worker pool. Results are collected in task index order, so
/// the outcome is identical for any worker count.
pub struct RayonMap {
    pool: rayon::ThreadPool,
}

impl RayonMap {
    pub fn new(workers: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .expect("worker pool");
        Self { pool }
    }
}

impl ParallelMap for RayonMap {
    fn map(
        &self,
        n: usize,
        f: &(dyn Fn(usize) -> Vec<Complex64> + Sync),
    ) -> Vec<Vec<Complex64>> {
        use rayon::prelude::*;
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}

pub struct StdClock {
    origin: Instant,
}

impl StdClock {
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Default for StdClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for StdClock {
    fn now(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}
