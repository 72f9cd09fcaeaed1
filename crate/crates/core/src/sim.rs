//! Deterministic Monte Carlo engine.
//!
//! Every replicate draws from its own counter-derived ChaCha stream, so the
//! estimate is a pure function of `(seed, replicates)` no matter how many
//! workers run it: replicates are evaluated in parallel into an indexed
//! buffer and reduced in fixed order afterwards.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::kahan_sum;

/// Replication plan: number of replicates, master seed, worker count
/// (0 = rayon default).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub replicates: usize,
    pub seed: u64,
    pub workers: usize,
}

impl SimConfig {
    pub fn new(replicates: usize, seed: u64) -> Self {
        Self {
            replicates,
            seed,
            workers: 0,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }
}

/// One replicate's payoff: the policy's obtained value and the realized
/// maximum of the same draw (the paired estimator for continuous ratios).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub value: f64,
    pub max: f64,
}

/// Monte Carlo estimate of `E[X_sigma]` with its standard error, 95%
/// confidence interval, competitive ratio, and the (paired) mean maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub mean: f64,
    pub stderr: f64,
    /// `mean / E[max]`, with the exact expected maximum when the caller
    /// supplies one and the paired Monte Carlo maximum otherwise.
    pub ratio: f64,
    pub ci95: (f64, f64),
    pub mean_max: f64,
}

/// The ChaCha stream for replicate `r`: same key, counter-selected stream.
pub fn replicate_rng(seed: u64, r: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r);
    rng
}

/// Runs all replicates (in parallel unless `workers == 1`) and returns them
/// in replicate order.
pub fn run_replicates<F>(runner: F, cfg: &SimConfig) -> Vec<Replicate>
where
    F: Fn(&mut ChaCha8Rng) -> Replicate + Sync,
{
    let run_one = |r: usize| {
        let mut rng = replicate_rng(cfg.seed, r as u64);
        runner(&mut rng)
    };
    match cfg.workers {
        1 => (0..cfg.replicates).map(run_one).collect(),
        0 => (0..cfg.replicates).into_par_iter().map(run_one).collect(),
        w => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .expect("worker pool");
            pool.install(|| (0..cfg.replicates).into_par_iter().map(run_one).collect())
        }
    }
}

/// Fixed-order reduction of replicates into a [`SimResult`].
///
/// `exact_max` supplies the exact `E[max]` (discrete distributions); when
/// absent the paired Monte Carlo maximum is used. The ratio is `NaN` when
/// the chosen denominator is not positive.
pub fn summarize(samples: &[Replicate], exact_max: Option<f64>) -> SimResult {
    assert!(!samples.is_empty(), "need at least one replicate");
    let r = samples.len() as f64;
    let mean = kahan_sum(samples.iter().map(|s| s.value)) / r;
    let mean_max = kahan_sum(samples.iter().map(|s| s.max)) / r;
    let stderr = if samples.len() > 1 {
        let ss = kahan_sum(samples.iter().map(|s| {
            let d = s.value - mean;
            d * d
        }));
        (ss / (r - 1.0) / r).sqrt()
    } else {
        0.0
    };
    let denom = exact_max.unwrap_or(mean_max);
    let ratio = if denom > 0.0 { mean / denom } else { f64::NAN };
    SimResult {
        mean,
        stderr,
        ratio,
        ci95: (mean - 1.96 * stderr, mean + 1.96 * stderr),
        mean_max,
    }
}

/// [`run_replicates`] followed by [`summarize`].
pub fn estimate<F>(runner: F, exact_max: Option<f64>, cfg: &SimConfig) -> SimResult
where
    F: Fn(&mut ChaCha8Rng) -> Replicate + Sync,
{
    summarize(&run_replicates(runner, cfg), exact_max)
}
