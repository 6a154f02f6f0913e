// SPDX-License-Identifier: MIT OR Apache-2.0

//! Unit-vector clusters on the hypersphere with controllable angular spread
//! and separation.
//!
//! Cluster 0 sits at a random unit center `c`. Cluster `i ≥ 1` sits at
//! `cos(sep)·c + sin(sep)·u_i`, with `u_i` a random unit vector orthogonal
//! to `c`. A member is `normalize(center + t)`, where `t` is Gaussian noise
//! projected onto the tangent space and scaled so that `E‖t‖² = spread²`.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cosine_distance, ConditionSet};
use crate::prng::{PrngSpec, Rng};

const EXPECTATION_DRAWS: usize = 4000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub k: usize,
    pub n_per_cluster: usize,
    pub dim: usize,
    /// Angular SD of members around their center, radians.
    pub within_spread: f64,
    /// Angle between cluster 0 and every other center, radians.
    pub between_separation: f64,
    pub seed: u64,
}

impl ClusterSpec {
    /// Two groups of eight in 64 dimensions, tuned so the within-vs-between
    /// effect size sits near 1.9.
    pub fn effect_size_preset(seed: u64) -> Self {
        Self {
            k: 2,
            n_per_cluster: 8,
            dim: 64,
            within_spread: 0.30,
            between_separation: 0.26,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.n_per_cluster < 1 {
            return Err(Error::Config("cluster spec needs k >= 1 and n_per_cluster >= 1".into()));
        }
        if self.dim < 2 {
            return Err(Error::Config("cluster spec needs dim >= 2".into()));
        }
        if !(self.within_spread > 0.0 && self.within_spread.is_finite()) {
            return Err(Error::Config(format!("within_spread must be > 0, got {}", self.within_spread)));
        }
        if !(self.between_separation > 0.0 && self.between_separation <= std::f64::consts::PI) {
            return Err(Error::Config(format!(
                "between_separation must be in (0, pi], got {}",
                self.between_separation
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticClusters {
    /// One set per cluster, labelled `cluster_<i>`; doc ids `c<i>_<j>`.
    pub sets: Vec<ConditionSet>,
    pub centers: Vec<Vec<f64>>,
    /// Monte-Carlo mean of the within-cluster distance (same for every cluster).
    pub expected_within: f64,
    /// Monte-Carlo mean distance between cluster 0 and cluster `i`; entry 0 is
    /// `expected_within`.
    pub expected_between: Vec<f64>,
}

pub fn synth_clusters(spec: &ClusterSpec) -> Result<SyntheticClusters> {
    spec.validate()?;
    let prng = PrngSpec::new(spec.seed);
    let mut rng = prng.rng();
    let base = random_unit(spec.dim, &mut rng);
    let mut centers = vec![base.clone()];
    for _ in 1..spec.k {
        let u = tangent_unit(&base, &mut rng);
        let (c, s) = (spec.between_separation.cos(), spec.between_separation.sin());
        centers.push(base.iter().zip(&u).map(|(b, u)| c * b + s * u).collect());
    }
    let sets = centers
        .iter()
        .enumerate()
        .map(|(i, center)| {
            let members = (0..spec.n_per_cluster)
                .map(|j| (format!("c{i}_{j:03}"), member(center, spec.within_spread, &mut rng)))
                .collect();
            ConditionSet::new(format!("cluster_{i}"), 0, members)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut mc = prng.derive(1).rng();
    let mut expect = |a: &[f64], b: &[f64]| -> Result<f64> {
        let mut sum = 0.0;
        for _ in 0..EXPECTATION_DRAWS {
            let x = member(a, spec.within_spread, &mut mc);
            let y = member(b, spec.within_spread, &mut mc);
            sum += cosine_distance(&x, &y)?;
        }
        Ok(sum / EXPECTATION_DRAWS as f64)
    };
    let expected_within = expect(&centers[0], &centers[0])?;
    let mut expected_between = vec![expected_within];
    for c in &centers[1..] {
        expected_between.push(expect(&centers[0], c)?);
    }
    Ok(SyntheticClusters {
        sets,
        centers,
        expected_within,
        expected_between,
    })
}

fn gaussian(dim: usize, rng: &mut Rng) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

fn random_unit(dim: usize, rng: &mut Rng) -> Vec<f64> {
    normalize(gaussian(dim, rng))
}

/// Gaussian vector with the component along `center` removed.
fn tangent(center: &[f64], rng: &mut Rng) -> Vec<f64> {
    let mut z = gaussian(center.len(), rng);
    let dot: f64 = z.iter().zip(center).map(|(a, b)| a * b).sum();
    z.iter_mut().zip(center).for_each(|(a, c)| *a -= dot * c);
    z
}

fn tangent_unit(center: &[f64], rng: &mut Rng) -> Vec<f64> {
    normalize(tangent(center, rng))
}

fn member(center: &[f64], spread: f64, rng: &mut Rng) -> Vec<f64> {
    let scale = spread / ((center.len() - 1) as f64).sqrt();
    let t = tangent(center, rng);
    normalize(center.iter().zip(&t).map(|(c, t)| c + scale * t).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{norm, pairwise_between, pairwise_within};

    fn spec(spread: f64, sep: f64) -> ClusterSpec {
        ClusterSpec {
            k: 2,
            n_per_cluster: 6,
            dim: 32,
            within_spread: spread,
            between_separation: sep,
            seed: 11,
        }
    }

    #[test]
    fn members_are_unit_vectors() {
        let c = synth_clusters(&spec(0.3, 0.5)).unwrap();
        for set in &c.sets {
            for (_, v) in set.members() {
                assert!((norm(v) - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(c.sets.len(), 2);
        assert_eq!(c.sets[1].len(), 6);
    }

    #[test]
    fn vanishing_spread_collapses_within() {
        let c = synth_clusters(&spec(1e-9, 0.5)).unwrap();
        let w = pairwise_within(&c.sets[0]).unwrap();
        assert!(w.values().iter().all(|&d| d < 1e-12));
    }

    #[test]
    fn antipodal_tight_clusters() {
        let c = synth_clusters(&spec(1e-6, std::f64::consts::PI)).unwrap();
        let b = pairwise_between(&c.sets[0], &c.sets[1]).unwrap();
        assert!(b.values().iter().all(|&d| (d - 2.0).abs() < 1e-9));
        assert!((c.expected_between[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(synth_clusters(&spec(0.0, 0.5)).is_err());
        assert!(synth_clusters(&spec(0.3, 0.0)).is_err());
    }

    #[test]
    fn deterministic() {
        let a = synth_clusters(&spec(0.3, 0.5)).unwrap();
        let b = synth_clusters(&spec(0.3, 0.5)).unwrap();
        assert_eq!(a.sets, b.sets);
        assert_eq!(a.expected_between, b.expected_between);
    }
}
