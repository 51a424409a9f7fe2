//! Aggregate statistics for multi-seed evaluations: mean, median,
//! interquartile mean, and stratified bootstrap confidence intervals.
//!
//! The bootstrap resampling stream is part of the public contract so an
//! independent reimplementation can reproduce interval endpoints exactly:
//! the rng is `ChaCha8Rng::seed_from_u64(seed)`; for each of the
//! `n_bootstrap` replicates, strata are visited in ascending key order and
//! each stratum draws `len` indices via `random_range(0..len)`; the pooled
//! resample is evaluated by each statistic; endpoints are the 2.5% and
//! 97.5% linearly interpolated percentiles of the replicate values.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n − 1 denominator); zero for fewer than two
/// values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    var.sqrt()
}

pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    percentile_sorted(&sorted, 0.5)
}

/// Interquartile mean: the weighted mean of the middle 50% of the sorted
/// values, with fractional weights on the two boundary observations when
/// `n` is not a multiple of four.
pub fn iqm(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    let lo = n / 4.0;
    let hi = n - n / 4.0;
    let mut weighted = 0.0;
    let mut weight = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        let w = (hi.min((i + 1) as f64) - lo.max(i as f64)).max(0.0);
        weighted += w * v;
        weight += w;
    }
    weighted / weight
}

/// Linearly interpolated percentile of an ascending-sorted slice,
/// `p` in `[0, 1]`.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Point estimate plus a 95% bootstrap confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

/// Pooled aggregates over all strata with stratified bootstrap CIs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub mean: Estimate,
    pub median: Estimate,
    pub iqm: Estimate,
    pub std: f64,
    pub count: usize,
}

/// Scores grouped by stratum (environment). Keys iterate in sorted order,
/// which the resampling contract relies on.
pub type ScoresByEnv = BTreeMap<String, Vec<f64>>;

/// Compute pooled mean/median/IQM with stratified bootstrap 95% CIs.
///
/// Resampling happens within each stratum (with replacement), preserving the
/// per-stratum sample counts; each replicate recomputes all three statistics
/// on the pooled resample. Requires at least two scores per stratum and at
/// least 1000 replicates.
pub fn aggregate(scores: &ScoresByEnv, n_bootstrap: usize, seed: u64) -> Result<Aggregates> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("scores"));
    }
    if n_bootstrap < 1000 {
        return Err(Error::invalid(format!(
            "n_bootstrap must be at least 1000, got {n_bootstrap}"
        )));
    }
    for (env, stratum) in scores {
        if stratum.len() < 2 {
            return Err(Error::invalid(format!(
                "stratum {env:?} has {} scores, need at least 2",
                stratum.len()
            )));
        }
    }
    let pooled: Vec<f64> = scores.values().flatten().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = Vec::with_capacity(n_bootstrap);
    let mut medians = Vec::with_capacity(n_bootstrap);
    let mut iqms = Vec::with_capacity(n_bootstrap);
    let mut resample = Vec::with_capacity(pooled.len());
    for _ in 0..n_bootstrap {
        resample.clear();
        for stratum in scores.values() {
            for _ in 0..stratum.len() {
                resample.push(stratum[rng.random_range(0..stratum.len())]);
            }
        }
        means.push(mean(&resample));
        medians.push(median(&resample));
        iqms.push(iqm(&resample));
    }
    Ok(Aggregates {
        mean: estimate(mean(&pooled), &mut means),
        median: estimate(median(&pooled), &mut medians),
        iqm: estimate(iqm(&pooled), &mut iqms),
        std: sample_std(&pooled),
        count: pooled.len(),
    })
}

fn estimate(value: f64, replicates: &mut [f64]) -> Estimate {
    replicates.sort_by(|a, b| a.total_cmp(b));
    Estimate {
        value,
        ci_lower: percentile_sorted(replicates, 0.025),
        ci_upper: percentile_sorted(replicates, 0.975),
    }
}
