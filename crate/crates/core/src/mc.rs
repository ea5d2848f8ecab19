//! Monte Carlo plumbing: ordered parallel maps and summary statistics.

use crate::error::Result;
use crate::fbm::{brownian_path, FbmMethod, FbmSampler};
use crate::fracpath::GridPath;
use crate::rng::Domain;
use crate::sde::Drivers;
use rayon::prelude::*;

/// Evaluates `f(0..n)` in parallel, returning results in index order so
/// that downstream reductions do not depend on the worker count.
pub fn par_map<T, F>(n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// As [`par_map`] for fallible work; the first error in index order wins.
pub fn try_par_map<T, F>(n: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    par_map(n, f).into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    /// Sample mean and standard error, summed sequentially.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / ((n - 1) * n) as f64).sqrt()
        } else {
            f64::INFINITY
        };
        Self { mean, stderr, n }
    }

    /// Unbiased sample variance with its large-sample standard error.
    pub fn variance_of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        Self { mean: var, stderr: ((m4 - var * var).max(0.0) / n).sqrt(), n: xs.len() }
    }
}

/// Batch-means estimate of a time average over `batches` equal batches.
pub fn batch_means(series: &[f64], batches: usize) -> Estimate {
    let len = series.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| series[b * len..(b + 1) * len].iter().sum::<f64>() / len as f64)
        .collect();
    Estimate::from_samples(&means)
}

/// Wilson score interval for `k` successes out of `n` at normal quantile `z`.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Cholesky up to 1024 steps, circulant embedding beyond.
pub fn default_method(steps: usize) -> FbmMethod {
    if steps <= 1024 {
        FbmMethod::Cholesky
    } else {
        FbmMethod::Circulant
    }
}

/// fBm driver number `index` for `(seed, H, T, M)`.
pub fn fbm_driver(hurst: f64, dim: usize, horizon: f64, steps: usize, seed: u64, index: u64) -> Result<GridPath> {
    Ok(FbmSampler::cached(hurst, horizon, steps, default_method(steps))?.sample(seed, index, dim))
}

/// Independent `(B^H, W)` pair number `index`.
pub fn mixed_drivers(hurst: f64, d1: usize, d2: usize, horizon: f64, steps: usize, seed: u64, index: u64) -> Result<Drivers> {
    let fbm = fbm_driver(hurst, d1, horizon, steps, seed, index)?;
    let bm = brownian_path(seed, Domain::Bm, index, d2, horizon, steps)?;
    Drivers::new(fbm, bm)
}

/// Least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
