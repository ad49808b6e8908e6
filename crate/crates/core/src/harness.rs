//! Reproducible Monte Carlo replication, estimators and goodness-of-fit
//! tests.
//!
//! Every replica draws from its own ChaCha stream keyed by (seed, purpose
//! tag, replica index), and results are merged in index order, so output
//! is bit-identical for any degree of parallelism.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_lr, gamma_ur};

use crate::error::{Error, Result};

/// Significance level of every hard statistical check.
pub const ALPHA: f64 = 0.01;

/// Standard-error multiple used by closed-form-vs-Monte-Carlo checks.
pub const SE_RULE: f64 = 4.0;

/// Minimum sample size accepted by [`ks_test`].
pub const KS_MIN_SAMPLES: usize = 1000;

fn fnv1a(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// RNG for replica `replica` of the computation named `tag`.
pub fn stream_rng(seed: u64, tag: &str, replica: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&fnv1a(tag).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(replica);
    rng
}

#[cfg(feature = "parallel")]
fn thread_pool(threads: usize) -> Result<std::sync::Arc<rayon::ThreadPool>> {
    use std::collections::HashMap;
    use std::sync::{Arc, Mutex, OnceLock};
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<rayon::ThreadPool>>>> = OnceLock::new();
    let mut pools = POOLS.get_or_init(Default::default).lock().expect("pool cache poisoned");
    if let Some(p) = pools.get(&threads) {
        return Ok(p.clone());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    let pool = Arc::new(pool);
    pools.insert(threads, pool.clone());
    Ok(pool)
}

/// Runs `task(i, rng_i)` for `i in 0..n` and returns the results in index
/// order. `parallelism` is the number of worker threads (0 = all cores,
/// 1 = sequential). Without the `parallel` feature every run is sequential.
/// A failing replica is reported with its index (the lowest failing one).
pub fn replicate<T, F>(n: usize, seed: u64, tag: &str, parallelism: usize, task: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> Result<T> + Sync,
{
    let run = |i: usize| {
        let mut rng = stream_rng(seed, tag, i as u64);
        task(i, &mut rng)
    };
    let results: Vec<Result<T>> = run_indexed(n, parallelism, &run)?;
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| r.map_err(|e| Error::Replica { index, source: Box::new(e) }))
        .collect()
}

#[cfg(feature = "parallel")]
fn run_indexed<T: Send>(n: usize, parallelism: usize, run: &(dyn Fn(usize) -> T + Sync)) -> Result<Vec<T>> {
    use rayon::prelude::*;
    if parallelism == 1 {
        return Ok((0..n).map(run).collect());
    }
    let go = || (0..n).into_par_iter().map(run).collect::<Vec<T>>();
    if parallelism == 0 {
        Ok(go())
    } else {
        Ok(thread_pool(parallelism)?.install(go))
    }
}

#[cfg(not(feature = "parallel"))]
fn run_indexed<T: Send>(n: usize, _parallelism: usize, run: &(dyn Fn(usize) -> T + Sync)) -> Result<Vec<T>> {
    Ok((0..n).map(run).collect())
}

/// Mean, standard error and quantiles of a sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorReport {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`.
    pub stderr: f64,
    pub n: usize,
    pub quantiles: BTreeMap<String, f64>,
}

impl EstimatorReport {
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        let n = xs.len();
        if n < 2 {
            return Err(Error::TestInput(format!("need at least 2 samples, got {n}")));
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let quantiles = [("q05", 0.05), ("q25", 0.25), ("q50", 0.5), ("q75", 0.75), ("q95", 0.95)]
            .into_iter()
            .map(|(k, p)| (k.to_string(), quantile_sorted(&sorted, p)))
            .collect();
        Ok(Self { mean, stderr: (var / n as f64).sqrt(), n, quantiles })
    }

    pub fn median(&self) -> f64 {
        self.quantiles["q50"]
    }

    /// `|mean - target| <= k * stderr`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr
    }

    /// Distance to `target` in standard errors.
    pub fn z_score(&self, target: f64) -> f64 {
        if self.stderr == 0.0 {
            if self.mean == target {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - target) / self.stderr
        }
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Runs a scalar sampling task over `n` replicas and summarizes it.
pub fn run_replicas<F>(task: F, n: usize, seed: u64, parallelism: usize) -> Result<EstimatorReport>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
{
    let xs = replicate(n, seed, "run_replicas", parallelism, |_, rng| task(rng))?;
    EstimatorReport::from_samples(&xs)
}

/// Asymptotic Kolmogorov distribution tail `Q_KS(lambda)`.
fn q_ks(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = sign * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov test; returns `(D, p)`.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    let n = samples.len();
    if n < KS_MIN_SAMPLES {
        return Err(Error::TestInput(format!("KS test needs at least {KS_MIN_SAMPLES} samples, got {n}")));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::TestInput("NaN sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (k, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((k as f64 + 1.0) / nf - f).max(f - k as f64 / nf);
    }
    let en = nf.sqrt();
    Ok((d, q_ks((en + 0.12 + 0.11 / en) * d)))
}

/// Outcome of a two-sample chi-square test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Chi2Outcome {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Cells after pooling.
    pub cells: usize,
}

/// Two-sample chi-square homogeneity test on categorical outcomes.
/// Categories whose expected count is below 5 on either side are pooled
/// into one cell.
pub fn word_chi2<K: Ord + Clone>(a: &[K], b: &[K]) -> Result<Chi2Outcome> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::TestInput("empty sample".into()));
    }
    let mut table: BTreeMap<K, (f64, f64)> = BTreeMap::new();
    for k in a {
        table.entry(k.clone()).or_default().0 += 1.0;
    }
    for k in b {
        table.entry(k.clone()).or_default().1 += 1.0;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let total = na + nb;
    let mut cells = Vec::new();
    let mut pooled = (0.0, 0.0);
    for &(ca, cb) in table.values() {
        let expected_min = (ca + cb) * na.min(nb) / total;
        if expected_min < 5.0 {
            pooled.0 += ca;
            pooled.1 += cb;
        } else {
            cells.push((ca, cb));
        }
    }
    if pooled.0 + pooled.1 > 0.0 {
        cells.push(pooled);
    }
    if cells.len() < 2 {
        return Err(Error::TestInput("fewer than two cells after pooling".into()));
    }
    let mut stat = 0.0;
    for &(ca, cb) in &cells {
        let ea = (ca + cb) * na / total;
        let eb = (ca + cb) * nb / total;
        stat += (ca - ea).powi(2) / ea + (cb - eb).powi(2) / eb;
    }
    let dof = cells.len() - 1;
    Ok(Chi2Outcome { statistic: stat, dof, p_value: chi2_sf(stat, dof as f64), cells: cells.len() })
}

/// Upper tail of the chi-square law.
pub fn chi2_sf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_ur(0.5 * dof, 0.5 * x)
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// CDF of the inverse Gaussian law with mean `mu` and shape `lambda`.
pub fn inverse_gaussian_cdf(x: f64, mu: f64, lambda: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let r = (lambda / x).sqrt();
    let first = normal_cdf(r * (x / mu - 1.0));
    let tail = normal_cdf(-r * (x / mu + 1.0));
    let second = if tail > 0.0 { (2.0 * lambda / mu + tail.ln()).exp() } else { 0.0 };
    (first + second).min(1.0)
}

/// CDF of Gamma(shape, rate).
pub fn gamma_cdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(shape, rate * x)
    }
}

/// Mean and standard error of paired differences `a_k - b_k`.
pub fn paired_difference(a: &[f64], b: &[f64]) -> Result<EstimatorReport> {
    if a.len() != b.len() {
        return Err(Error::TestInput("paired samples differ in length".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    EstimatorReport::from_samples(&d)
}

/// Difference of two independent means with combined standard error.
pub fn two_sample_z(a: &EstimatorReport, b: &EstimatorReport) -> f64 {
    let se = (a.stderr * a.stderr + b.stderr * b.stderr).sqrt();
    if se == 0.0 {
        if a.mean == b.mean {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (a.mean - b.mean) / se
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_task() {
        let r = run_replicas(|_| Ok(2.5), 100, 1, 1).unwrap();
        assert_eq!(r.mean, 2.5);
        assert_eq!(r.stderr, 0.0);
    }

    #[test]
    fn uniform_task() {
        let r = run_replicas(|rng| Ok(rng.random::<f64>()), 100_000, 2, 0).unwrap();
        assert!(r.within(0.5, SE_RULE));
    }

    #[test]
    fn deterministic_across_parallelism() {
        let task = |rng: &mut ChaCha8Rng| Ok(rng.random::<f64>().ln());
        let a = run_replicas(task, 10_000, 3, 1).unwrap();
        let b = run_replicas(task, 10_000, 3, 8).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    }

    #[test]
    fn streams_differ_by_tag_and_replica() {
        let x: u64 = stream_rng(1, "a", 0).random();
        let y: u64 = stream_rng(1, "b", 0).random();
        let z: u64 = stream_rng(1, "a", 1).random();
        assert!(x != y && x != z && y != z);
    }

    #[test]
    fn replica_errors_carry_index() {
        let err = replicate(10, 0, "t", 4, |i, _| if i >= 3 { Err(Error::Domain("x".into())) } else { Ok(i) })
            .unwrap_err();
        assert!(matches!(err, Error::Replica { index: 3, .. }));
    }

    #[test]
    fn ks_calibration() {
        let mut passes = 0;
        for seed in 0..100 {
            let mut rng = stream_rng(seed, "ks", 0);
            let xs: Vec<f64> = (0..2000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            if ks_test(&xs, normal_cdf).unwrap().1 > ALPHA {
                passes += 1;
            }
        }
        assert!(passes >= 98, "{passes}");
    }

    #[test]
    fn ks_power() {
        let mut rng = stream_rng(0, "ks-power", 0);
        let xs: Vec<f64> = (0..100_000).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); z + 0.05 }).collect();
        assert!(ks_test(&xs, normal_cdf).unwrap().1 < ALPHA);
        assert!(ks_test(&xs[..10], normal_cdf).is_err());
    }

    #[test]
    fn chi2_identical() {
        let words: Vec<u32> = (0..5000).map(|i| i % 7).collect();
        let out = word_chi2(&words, &words).unwrap();
        assert_relative_eq!(out.p_value, 1.0);
        assert!(word_chi2(&[1u32; 10], &[1u32; 10]).is_err());
    }

    #[test]
    fn special_functions() {
        assert_relative_eq!(normal_cdf(0.0), 0.5);
        assert_relative_eq!(chi2_sf(3.841458820694124, 1.0), 0.05, epsilon = 1e-10);
        assert_relative_eq!(gamma_cdf(1.0, 1.0, 1.0), 1.0 - (-1.0f64).exp(), epsilon = 1e-14);
        // inverse Gaussian mean 1 shape 1: CDF at 1
        let v = inverse_gaussian_cdf(1.0, 1.0, 1.0);
        let expect = normal_cdf(0.0) + 2f64.exp() * normal_cdf(-2.0);
        assert_relative_eq!(v, expect, epsilon = 1e-14);
    }
}
