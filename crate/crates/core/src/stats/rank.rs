// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::special::normal_cdf;
use super::{require_len, Tail, TestResult};
use crate::error::Result;

/// Pooled sample size up to which the exact null distribution is enumerated.
pub const EXACT_MAX_N: usize = 12;

/// Mann-Whitney U outcome.
///
/// `u_a` counts, over all (x in a, y in b) pairs, 1 for x > y and ½ for a
/// tie. `u_a = 0` therefore means no value of `a` exceeds any value of `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    pub u_a: f64,
    pub u_b: f64,
    pub u_min: f64,
    /// Continuity-corrected z of the normal approximation.
    pub z: f64,
    pub p_normal: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_exact: Option<f64>,
    /// `statistic = u_a`; `p_value` is exact when available.
    pub result: TestResult,
}

/// Average ranks (1-based) of the pooled values, plus the tie-correction sum Σ(t³ − t).
fn midranks(pooled: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut tie_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && pooled[order[j]] == pooled[order[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        let t = (j - i) as f64;
        tie_sum += t * t * t - t;
        i = j;
    }
    (ranks, tie_sum)
}

fn u_of(ranks_a: impl Iterator<Item = f64>, na: usize) -> f64 {
    let r: f64 = ranks_a.sum();
    r - (na * (na + 1)) as f64 / 2.0
}

pub fn mann_whitney_u(a: &[f64], b: &[f64], tail: Tail) -> Result<MannWhitney> {
    require_len(a, 1, "mann_whitney_u")?;
    require_len(b, 1, "mann_whitney_u")?;
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, tie_sum) = midranks(&pooled);
    let u_a = u_of(ranks[..na].iter().copied(), na);
    let prod = (na * nb) as f64;
    let u_b = prod - u_a;
    let mu = prod / 2.0;

    let nf = n as f64;
    let var = prod / 12.0 * ((nf + 1.0) - tie_sum / (nf * (nf - 1.0)).max(1.0));
    let (z, p_normal) = if var <= 0.0 {
        (0.0, 1.0)
    } else {
        let sd = var.sqrt();
        match tail {
            Tail::Less => {
                let z = (u_a - mu + 0.5) / sd;
                (z, normal_cdf(z))
            }
            Tail::Greater => {
                let z = (u_a - mu - 0.5) / sd;
                (z, normal_cdf(-z))
            }
            Tail::TwoSided => {
                let z = ((u_a - mu).abs() - 0.5).max(0.0) / sd;
                (z, (2.0 * normal_cdf(-z)).min(1.0))
            }
        }
    };

    let p_exact = (n <= EXACT_MAX_N).then(|| exact_p(&ranks, na, u_a, tail));
    Ok(MannWhitney {
        u_a,
        u_b,
        u_min: u_a.min(u_b),
        z,
        p_normal,
        p_exact,
        result: TestResult {
            statistic: u_a,
            p_value: p_exact.unwrap_or(p_normal).clamp(0.0, 1.0),
            df: None,
            tail,
            n1: na,
            n2: nb,
        },
    })
}

/// Exact permutation p of U over all C(n, n_a) assignments of the pooled
/// midranks to group a (conditional on the observed ties).
fn exact_p(ranks: &[f64], na: usize, u_obs: f64, tail: Tail) -> f64 {
    let n = ranks.len();
    let mu = (na * (n - na)) as f64 / 2.0;
    let eps = 1e-9;
    let mut total = 0u64;
    let mut hits = 0u64;
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize != na {
            continue;
        }
        let u = u_of(
            (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]),
            na,
        );
        total += 1;
        let hit = match tail {
            Tail::Less => u <= u_obs + eps,
            Tail::Greater => u >= u_obs - eps,
            Tail::TwoSided => (u - mu).abs() >= (u_obs - mu).abs() - eps,
        };
        if hit {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}
