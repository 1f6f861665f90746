//! Goodness of fit of the replication distribution to a normal law.
//!
//! Each network yields a one-sample Kolmogorov-Smirnov statistic against a
//! normal with estimated mean and variance. Because the moments are estimated
//! the classical KS table does not apply; the null distribution is simulated
//! instead (it does not depend on the true moments).

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::StudyResult;
use crate::error::{Error, Result};
use crate::estimator::Variant;
use crate::rng::{self, derive_seed, tag};

const NULL_DRAWS: usize = 2000;
const BAND_DRAWS: usize = 100;

fn ks_sorted(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

fn sort(v: &mut [f64]) {
    v.sort_by(|a, b| a.total_cmp(b));
}

/// KS distance between the sample and the normal fitted by its mean and
/// standard deviation.
pub fn lilliefors_statistic(sample: &[f64]) -> Result<f64> {
    let n = sample.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 observations, got {n}"
        )));
    }
    let mean = sample.iter().sum::<f64>() / n as f64;
    let var = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::Numerical(format!("sample variance is {var}")));
    }
    let sd = var.sqrt();
    let mut z: Vec<f64> = sample.iter().map(|x| (x - mean) / sd).collect();
    sort(&mut z);
    let std = Normal::standard();
    Ok(ks_sorted(&z, |x| std.cdf(x)))
}

/// Simulated null distribution of [`lilliefors_statistic`] for one sample size.
#[derive(Debug, Clone)]
pub struct LillieforsNull {
    pub sample_size: usize,
    stats: Vec<f64>,
}

impl LillieforsNull {
    pub fn new(sample_size: usize, draws: usize, seed: u64) -> Result<Self> {
        if draws == 0 {
            return Err(Error::InvalidInput("need at least one null draw".into()));
        }
        let mut stats: Vec<f64> = (0..draws)
            .into_par_iter()
            .map(|b| {
                let mut r = rng::stream(seed, &[tag::NORMALITY, sample_size as u64, b as u64]);
                let x: Vec<f64> = (0..sample_size).map(|_| r.sample(StandardNormal)).collect();
                lilliefors_statistic(&x)
            })
            .collect::<Result<_>>()?;
        sort(&mut stats);
        Ok(Self { sample_size, stats })
    }

    pub fn draws(&self) -> usize {
        self.stats.len()
    }

    /// Monte Carlo p-value `(1 + #{null >= d}) / (B + 1)`.
    pub fn p_value(&self, d: f64) -> f64 {
        let below = self.stats.partition_point(|&s| s < d);
        (1 + self.stats.len() - below) as f64 / (self.stats.len() + 1) as f64
    }
}

/// Simultaneous band around the uniform cdf whose half-width is the largest
/// KS distance among reference samples of uniforms.
#[derive(Debug, Clone, Serialize)]
pub struct UniformBand {
    pub sample_size: usize,
    pub reference_draws: usize,
    pub half_width: f64,
}

pub fn uniform_band(sample_size: usize, draws: usize, seed: u64) -> Result<UniformBand> {
    if sample_size == 0 || draws == 0 {
        return Err(Error::InvalidInput(
            "uniform band needs a positive sample size and draw count".into(),
        ));
    }
    let half_width = (0..draws)
        .map(|b| {
            let mut r = rng::stream(
                seed,
                &[tag::NORMALITY, u64::MAX, sample_size as u64, b as u64],
            );
            let mut u: Vec<f64> = (0..sample_size).map(|_| r.random::<f64>()).collect();
            sort(&mut u);
            ks_sorted(&u, |x| x.clamp(0.0, 1.0))
        })
        .fold(0.0, f64::max);
    Ok(UniformBand {
        sample_size,
        reference_draws: draws,
        half_width,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalityReport {
    pub p_values: Vec<f64>,
    /// `(p, F(p))` points of the empirical cdf of the p-values.
    pub ecdf: Vec<(f64, f64)>,
    /// KS distance of the p-value ecdf to Unif(0, 1).
    pub ks_uniform: f64,
    pub band: UniformBand,
    pub within_band: bool,
}

/// One p-value per sample, then uniformity of the p-values.
pub fn normality_from_samples(samples: &[Vec<f64>], seed: u64) -> Result<NormalityReport> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    let mut nulls: Vec<LillieforsNull> = Vec::new();
    let mut p_values = Vec::with_capacity(samples.len());
    for s in samples {
        if s.len() < 20 {
            return Err(Error::InvalidInput(format!(
                "normality check needs at least 20 replications, got {}",
                s.len()
            )));
        }
        if !nulls.iter().any(|n| n.sample_size == s.len()) {
            nulls.push(LillieforsNull::new(s.len(), NULL_DRAWS, seed)?);
        }
        let null = nulls.iter().find(|n| n.sample_size == s.len()).unwrap();
        p_values.push(null.p_value(lilliefors_statistic(s)?));
    }
    let mut sorted = p_values.clone();
    sort(&mut sorted);
    let m = sorted.len() as f64;
    let ecdf = sorted
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, (i + 1) as f64 / m))
        .collect();
    let ks_uniform = ks_sorted(&sorted, |x| x.clamp(0.0, 1.0));
    let band = uniform_band(sorted.len(), BAND_DRAWS, seed)?;
    Ok(NormalityReport {
        within_band: ks_uniform <= band.half_width,
        p_values,
        ecdf,
        ks_uniform,
        band,
    })
}

/// Normality of `sqrt(N) (tau_hat - tau)` for every network of size `n`.
pub fn normality_diagnostic(
    result: &StudyResult,
    variant: Variant,
    n: usize,
    seed: u64,
) -> Result<NormalityReport> {
    let scale = (n as f64).sqrt();
    let samples: Vec<Vec<f64>> = result
        .cells_at(n)
        .map(|c| {
            c.runs(variant)
                .map(|r| r.tau_hat.iter().map(|t| scale * (t - c.tau)).collect())
                .ok_or_else(|| Error::InvalidInput(format!("variant {variant} was not run")))
        })
        .collect::<Result<_>>()?;
    if samples.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no networks of size {n} in the study"
        )));
    }
    normality_from_samples(&samples, derive_seed(seed, &[n as u64]))
}
