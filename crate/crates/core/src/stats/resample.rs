// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded permutation test and percentile bootstrap.
//!
//! Resample indices are drawn sequentially from the seeded stream in chunks;
//! each chunk is then evaluated in parallel and collected in order, so results
//! do not depend on the number of worker threads.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean, require_len, Tail};
use crate::error::{Error, Result};
use crate::prng::PrngSpec;

const CHUNK: usize = 1024;

/// Relative slack when comparing a resampled statistic to the observed one,
/// so that ties which differ only by summation order still count.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResamplingResult {
    /// Observed statistic (`mean_b − mean_a` for the one-sided less test).
    pub observed: f64,
    /// Raw estimator `exceed_count / n_resamples`; 0 is reported as "p < 1/n".
    pub p_value: f64,
    /// `(exceed_count + 1) / (n_resamples + 1)`.
    pub p_corrected: f64,
    pub exceed_count: usize,
    pub n_resamples: usize,
    pub seed: u64,
    pub tail: Tail,
}

impl ResamplingResult {
    /// Report-table rendering: `< 1e-4` when nothing exceeded.
    pub fn display_p(&self) -> String {
        if self.exceed_count == 0 {
            format!("< {:.0e}", 1.0 / self.n_resamples as f64)
        } else {
            format!("{:.4}", self.p_value)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub n_resamples: usize,
    pub seed: u64,
}

fn check_prng(prng: &PrngSpec) -> Result<()> {
    if !prng.is_supported() {
        return Err(Error::Config(format!(
            "unsupported PRNG algorithm '{}'",
            prng.algorithm
        )));
    }
    Ok(())
}

fn statistic(a_mean: f64, b_mean: f64, tail: Tail) -> f64 {
    match tail {
        Tail::Less => b_mean - a_mean,
        Tail::Greater => a_mean - b_mean,
        Tail::TwoSided => (b_mean - a_mean).abs(),
    }
}

/// One-sided permutation test of H1: mean(a) < mean(b).
pub fn permutation_test(a: &[f64], b: &[f64], n: usize, prng: &PrngSpec) -> Result<ResamplingResult> {
    permutation_test_tailed(a, b, n, prng, Tail::Less)
}

/// Permutation test of the difference in means, treating every value as an
/// exchangeable unit. A resample counts as exceeding when its statistic is
/// `>=` the observed one.
pub fn permutation_test_tailed(
    a: &[f64],
    b: &[f64],
    n: usize,
    prng: &PrngSpec,
    tail: Tail,
) -> Result<ResamplingResult> {
    check_prng(prng)?;
    if n == 0 {
        return Err(Error::Domain("permutation test needs at least one resample".into()));
    }
    if a.len() + b.len() < 2 || a.is_empty() || b.is_empty() {
        return Err(Error::Domain(
            "permutation test needs a non-empty sample in each group".into(),
        ));
    }
    require_len(a, 1, "permutation_test")?;
    require_len(b, 1, "permutation_test")?;

    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let na = a.len();
    let observed = statistic(mean(a), mean(b), tail);
    let scale = pooled.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let threshold = observed - TIE_EPS * scale;

    let mut rng = prng.rng();
    let mut order: Vec<u32> = (0..pooled.len() as u32).collect();
    let mut exceed = 0usize;
    let mut done = 0usize;
    while done < n {
        let take = CHUNK.min(n - done);
        let mut perms = Vec::with_capacity(take * order.len());
        for _ in 0..take {
            order.shuffle(&mut rng);
            perms.extend_from_slice(&order);
        }
        let hits: usize = perms
            .par_chunks_exact(pooled.len())
            .map(|perm| {
                let ga: Vec<f64> = perm[..na].iter().map(|&i| pooled[i as usize]).collect();
                let gb: Vec<f64> = perm[na..].iter().map(|&i| pooled[i as usize]).collect();
                usize::from(statistic(mean(&ga), mean(&gb), tail) >= threshold)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .sum();
        exceed += hits;
        done += take;
    }

    Ok(ResamplingResult {
        observed,
        p_value: exceed as f64 / n as f64,
        p_corrected: (exceed + 1) as f64 / (n + 1) as f64,
        exceed_count: exceed,
        n_resamples: n,
        seed: prng.seed,
        tail,
    })
}

/// Linear-interpolation quantile of sorted data (numpy's default method).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    if lo == hi || frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Percentile bootstrap interval for the mean.
pub fn bootstrap_ci(sample: &[f64], n: usize, level: f64, prng: &PrngSpec) -> Result<IntervalEstimate> {
    check_prng(prng)?;
    require_len(sample, 2, "bootstrap_ci")?;
    if n == 0 {
        return Err(Error::Domain("bootstrap needs at least one resample".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("confidence level must be in (0, 1), got {level}")));
    }
    let m = sample.len();
    let mut rng = prng.rng();
    let mut means = Vec::with_capacity(n);
    let mut done = 0usize;
    while done < n {
        let take = CHUNK.min(n - done);
        let idx: Vec<u32> = (0..take * m)
            .map(|_| rng.random_range(0..m as u32))
            .collect();
        means.extend(
            idx.par_chunks_exact(m)
                .map(|ix| {
                    let draw: Vec<f64> = ix.iter().map(|&i| sample[i as usize]).collect();
                    mean(&draw)
                })
                .collect::<Vec<_>>(),
        );
        done += take;
    }
    means.sort_by(f64::total_cmp);
    let alpha = 1.0 - level;
    Ok(IntervalEstimate {
        lo: quantile_sorted(&means, alpha / 2.0),
        hi: quantile_sorted(&means, 1.0 - alpha / 2.0),
        level,
        n_resamples: n,
        seed: prng.seed,
    })
}
