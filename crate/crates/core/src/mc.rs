//! Chunked, parallel Monte-Carlo averaging with deterministic reduction.
//!
//! Draws are split into fixed-size chunks. Chunk `i` owns RNG stream `i` of
//! the base seed, chunks run on the rayon pool and are merged in chunk order,
//! so the result does not depend on the number of worker threads.

use rayon::prelude::*;

use crate::rng::{stream_rng, DpRng};

pub const CHUNK: usize = 4096;

/// Running mean/variance (Welford) plus an all-draws flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McStats {
    pub n: usize,
    pub mean: f64,
    m2: f64,
    /// Logical AND of the per-draw flags.
    pub all: bool,
}

impl Default for McStats {
    fn default() -> Self {
        Self {
            n: 0,
            mean: 0.0,
            m2: 0.0,
            all: true,
        }
    }
}

impl McStats {
    pub fn push(&mut self, value: f64, flag: bool) {
        self.n += 1;
        let delta = value - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (value - self.mean);
        self.all &= flag;
    }

    pub fn merge(self, other: McStats) -> McStats {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        McStats {
            n,
            mean,
            m2,
            all: self.all && other.all,
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Runs `n_draws` evaluations of `draw` and returns their statistics.
///
/// `draw` returns `(value, flag)`; flags are AND-ed into [`McStats::all`].
pub fn run<F>(n_draws: usize, seed: u64, draw: F) -> McStats
where
    F: Fn(&mut DpRng) -> (f64, bool) + Sync,
{
    let chunks = n_draws.div_ceil(CHUNK);
    let parts: Vec<McStats> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let len = CHUNK.min(n_draws - c * CHUNK);
            let mut stats = McStats::default();
            for _ in 0..len {
                let (v, flag) = draw(&mut rng);
                stats.push(v, flag);
            }
            stats
        })
        .collect();
    parts.into_iter().fold(McStats::default(), McStats::merge)
}

/// Fallible variant of [`run`]; the first error in chunk order wins.
pub fn try_run<F, E>(n_draws: usize, seed: u64, draw: F) -> Result<McStats, E>
where
    F: Fn(&mut DpRng) -> Result<(f64, bool), E> + Sync,
    E: Send,
{
    let chunks = n_draws.div_ceil(CHUNK);
    let parts: Vec<Result<McStats, E>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let len = CHUNK.min(n_draws - c * CHUNK);
            let mut stats = McStats::default();
            for _ in 0..len {
                let (v, flag) = draw(&mut rng)?;
                stats.push(v, flag);
            }
            Ok(stats)
        })
        .collect();
    let mut acc = McStats::default();
    for p in parts {
        acc = acc.merge(p?);
    }
    Ok(acc)
}

/// Like [`try_run`] for `K` quantities observed on the same draws.
pub fn try_run_many<const K: usize, F, E>(
    n_draws: usize,
    seed: u64,
    draw: F,
) -> Result<[McStats; K], E>
where
    F: Fn(&mut DpRng) -> Result<[f64; K], E> + Sync,
    E: Send,
{
    let chunks = n_draws.div_ceil(CHUNK);
    let parts: Vec<Result<[McStats; K], E>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let len = CHUNK.min(n_draws - c * CHUNK);
            let mut stats = [McStats::default(); K];
            for _ in 0..len {
                let v = draw(&mut rng)?;
                for (s, x) in stats.iter_mut().zip(v) {
                    s.push(x, true);
                }
            }
            Ok(stats)
        })
        .collect();
    let mut acc = [McStats::default(); K];
    for p in parts {
        for (a, s) in acc.iter_mut().zip(p?) {
            *a = a.merge(s);
        }
    }
    Ok(acc)
}
