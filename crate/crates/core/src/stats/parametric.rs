// SPDX-License-Identifier: MIT OR Apache-2.0

use super::special::{t_cdf, t_sf};
use super::{mean, require_len, sample_variance, Summary, Tail, TestResult};
use crate::error::{Error, Result};

/// Welch's unequal-variance t test.
///
/// `t = (mean_b − mean_a) / sqrt(s_a²/n_a + s_b²/n_b)`, so a positive t
/// supports `mean(a) < mean(b)`. Degrees of freedom by Welch–Satterthwaite.
pub fn welch_t(a: &[f64], b: &[f64], tail: Tail) -> Result<TestResult> {
    require_len(a, 2, "welch_t")?;
    require_len(b, 2, "welch_t")?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_variance(a), sample_variance(b));
    if va == 0.0 && vb == 0.0 {
        return Err(Error::Degenerate(
            "welch_t: both samples have zero variance".into(),
        ));
    }
    let (qa, qb) = (va / na, vb / nb);
    let se2 = qa + qb;
    let t = (mean(b) - mean(a)) / se2.sqrt();
    let df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    let p = match tail {
        Tail::Less => t_sf(t, df),
        Tail::Greater => t_cdf(t, df),
        Tail::TwoSided => (2.0 * t_sf(t.abs(), df)).min(1.0),
    };
    Ok(TestResult {
        statistic: t,
        p_value: p.clamp(0.0, 1.0),
        df: Some(df),
        tail,
        n1: a.len(),
        n2: b.len(),
    })
}

/// Cohen's d with pooled SD: `(mean_b − mean_a) / s_pooled`. Signed, so a
/// reversed effect is negative.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    require_len(a, 2, "cohens_d")?;
    require_len(b, 2, "cohens_d")?;
    cohens_d_from_summary(
        &Summary {
            mean: mean(a),
            sd: sample_variance(a).sqrt(),
            n: a.len(),
        },
        &Summary {
            mean: mean(b),
            sd: sample_variance(b).sqrt(),
            n: b.len(),
        },
    )
}

/// Signed Cohen's d from summary statistics.
pub fn cohens_d_from_summary(a: &Summary, b: &Summary) -> Result<f64> {
    if a.n < 2 || b.n < 2 {
        return Err(Error::Domain("cohens_d needs n >= 2 in each group".into()));
    }
    let (na, nb) = (a.n as f64, b.n as f64);
    let pooled = ((na - 1.0) * a.sd * a.sd + (nb - 1.0) * b.sd * b.sd) / (na + nb - 2.0);
    if pooled == 0.0 {
        if a.mean == b.mean {
            return Ok(0.0);
        }
        return Err(Error::Degenerate("cohens_d: pooled variance is zero".into()));
    }
    Ok((b.mean - a.mean) / pooled.sqrt())
}
