// SPDX-License-Identifier: MIT OR Apache-2.0

//! Hypothesis-test battery: Welch t, Cohen's d, Mann-Whitney U, permutation
//! test and percentile bootstrap, plus Bonferroni thresholds.
//!
//! Two-sample functions take `(a, b)` where `a` is the group hypothesised to
//! have the smaller mean (within-group distances) and `b` the larger
//! (between-group distances).

pub mod parametric;
pub mod rank;
pub mod resample;
pub mod special;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use parametric::{cohens_d, cohens_d_from_summary, welch_t};
pub use rank::{mann_whitney_u, MannWhitney};
pub use resample::{
    bootstrap_ci, permutation_test, permutation_test_tailed, IntervalEstimate, ResamplingResult,
};
pub use special::t_cdf;

/// Alternative hypothesis about `mean(a)` relative to `mean(b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tail {
    /// H1: mean(a) < mean(b)
    #[serde(rename = "one_sided_less")]
    Less,
    /// H1: mean(a) > mean(b)
    #[serde(rename = "one_sided_greater")]
    Greater,
    #[serde(rename = "two_sided")]
    TwoSided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
    pub tail: Tail,
    pub n1: usize,
    pub n2: usize,
}

/// Mean, sample SD (n − 1 denominator) and count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

/// Mean computed as `x0 + Σ(xi − x0)/n`, which is exact for constant input.
pub fn mean(values: &[f64]) -> f64 {
    let Some(&x0) = values.first() else {
        return f64::NAN;
    };
    x0 + values.iter().map(|x| x - x0).sum::<f64>() / values.len() as f64
}

/// Sample variance with n − 1 denominator (two-pass).
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(values);
    values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

pub fn summarize(values: &[f64]) -> Summary {
    Summary {
        mean: mean(values),
        sd: sample_variance(values).sqrt(),
        n: values.len(),
    }
}

/// Per-test significance threshold `alpha / m`.
pub fn bonferroni_threshold(alpha: f64, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::Domain("Bonferroni correction needs m >= 1".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must be in (0, 1), got {alpha}")));
    }
    Ok(alpha / m as f64)
}

pub(crate) fn require_len(values: &[f64], min: usize, what: &str) -> Result<()> {
    if values.len() < min {
        return Err(Error::Domain(format!(
            "{what} needs at least {min} values per sample, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("{what}: sample contains non-finite values")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bonferroni_values() {
        assert!((bonferroni_threshold(0.05, 3).unwrap() - 0.016_666_666_666_666_666).abs() < 1e-18);
        assert_eq!(bonferroni_threshold(0.05, 1).unwrap(), 0.05);
        assert!((bonferroni_threshold(0.01, 5).unwrap() - 0.002).abs() < 1e-18);
        assert!(bonferroni_threshold(0.05, 0).is_err());
        assert!(bonferroni_threshold(1.5, 2).is_err());
    }

    #[test]
    fn mean_exact_for_constants() {
        assert_eq!(mean(&[0.1; 7]), 0.1);
        assert_eq!(sample_variance(&[0.1; 7]), 0.0);
    }

    #[test]
    fn summary_basic() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(s.n, 4);
    }

    #[test]
    fn tail_serde_names() {
        assert_eq!(serde_json::to_string(&Tail::Less).unwrap(), "\"one_sided_less\"");
        assert_eq!(serde_json::to_string(&Tail::TwoSided).unwrap(), "\"two_sided\"");
    }
}
