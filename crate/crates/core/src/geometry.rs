// SPDX-License-Identifier: MIT OR Apache-2.0

//! Cosine-distance kernels, pair samples, centroids and probe metrics.
//!
//! All arithmetic is f64. Pair order is lexicographic by doc id so that a
//! [`DistanceSample`] serializes identically on every run.

use std::collections::HashSet;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pooled vectors of one condition group at one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSet {
    pub label: String,
    pub layer: usize,
    vectors: Vec<(String, Vec<f64>)>,
}

impl ConditionSet {
    pub fn new(
        label: impl Into<String>,
        layer: usize,
        mut vectors: Vec<(String, Vec<f64>)>,
    ) -> Result<Self> {
        let label = label.into();
        let dim = vectors
            .first()
            .map(|(_, v)| v.len())
            .ok_or_else(|| Error::Domain(format!("condition set '{label}' is empty")))?;
        if dim == 0 {
            return Err(Error::Validation(format!("condition set '{label}' has zero-dimensional vectors")));
        }
        let mut seen = HashSet::new();
        for (id, v) in &vectors {
            if v.len() != dim {
                return Err(Error::Validation(format!(
                    "condition set '{label}': vector '{id}' has dimension {} (expected {dim})",
                    v.len()
                )));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::Validation(format!(
                    "condition set '{label}': duplicate doc id '{id}'"
                )));
            }
        }
        vectors.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(Self {
            label,
            layer,
            vectors,
        })
    }

    /// Merge several sets into one labelled group (e.g. A and B into "A+B").
    pub fn union(label: impl Into<String>, sets: &[&ConditionSet]) -> Result<Self> {
        let label = label.into();
        let layer = sets.first().map(|s| s.layer).unwrap_or_default();
        if sets.iter().any(|s| s.layer != layer) {
            return Err(Error::Validation(format!(
                "cannot union condition sets from different layers into '{label}'"
            )));
        }
        let vectors = sets.iter().flat_map(|s| s.vectors.iter().cloned()).collect();
        Self::new(label, layer, vectors)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].1.len()
    }

    /// Members sorted by doc id.
    pub fn members(&self) -> &[(String, Vec<f64>)] {
        &self.vectors
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.vectors.iter().map(|(id, _)| id.as_str())
    }

    pub fn get(&self, doc_id: &str) -> Option<&[f64]> {
        self.vectors
            .binary_search_by(|(id, _)| id.as_str().cmp(doc_id))
            .ok()
            .map(|i| self.vectors[i].1.as_slice())
    }
}

/// How a distance sample was generated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Recipe {
    Within { label: String },
    Between { left: String, right: String },
    ToCentroid { probe: String, label: String },
    /// Precomputed values supplied from outside the pipeline.
    Replay { source: String },
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Recipe::Within { label } => write!(f, "within({label})"),
            Recipe::Between { left, right } => write!(f, "between({left},{right})"),
            Recipe::ToCentroid { probe, label } => write!(f, "to_centroid({probe},{label})"),
            Recipe::Replay { source } => write!(f, "replay({source})"),
        }
    }
}

/// Ordered multiset of cosine distances with the pairs that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSample {
    pub recipe: Recipe,
    pub pair_ids: Vec<(String, String)>,
    pub values: Vec<f64>,
}

impl DistanceSample {
    /// A sample with no pair provenance (replayed or generated values).
    pub fn from_values(source: impl Into<String>, values: Vec<f64>) -> Self {
        let pair_ids = (0..values.len())
            .map(|i| (format!("r{i}"), String::new()))
            .collect();
        Self {
            recipe: Recipe::Replay {
                source: source.into(),
            },
            pair_ids,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// `1 − u·v / (‖u‖‖v‖)`, clamped to [0, 2].
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Validation(format!(
            "dimension mismatch: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let (uu, vv) = (dot(u, u), dot(v, v));
    if uu == 0.0 || vv == 0.0 || !uu.is_finite() || !vv.is_finite() {
        return Err(Error::Domain("cosine distance of a zero-norm or non-finite vector".into()));
    }
    // sqrt of the product keeps u == v at exactly zero distance
    let cos = dot(u, v) / (uu * vv).sqrt();
    Ok((1.0 - cos).clamp(0.0, 2.0))
}

/// Auxiliary Euclidean distance.
pub fn euclidean_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Validation(format!(
            "dimension mismatch: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    Ok(u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

/// All n(n−1)/2 unordered pairs of the set, ordered by (doc_i, doc_j).
pub fn pairwise_within(set: &ConditionSet) -> Result<DistanceSample> {
    let n = set.len();
    if n < 2 {
        return Err(Error::Domain(format!(
            "within-group distances need at least 2 vectors; '{}' has {n}",
            set.label
        )));
    }
    let members = set.members();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| cosine_distance(&members[i].1, &members[j].1))
        .collect::<Result<Vec<_>>>()?;
    let pair_ids = pairs
        .iter()
        .map(|&(i, j)| (members[i].0.clone(), members[j].0.clone()))
        .collect();
    Ok(DistanceSample {
        recipe: Recipe::Within {
            label: set.label.clone(),
        },
        pair_ids,
        values,
    })
}

/// All |a|·|b| cross pairs, ordered by (doc_a, doc_b).
pub fn pairwise_between(a: &ConditionSet, b: &ConditionSet) -> Result<DistanceSample> {
    if let Some(shared) = a.doc_ids().find(|id| b.get(id).is_some()) {
        return Err(Error::Validation(format!(
            "sets '{}' and '{}' share doc id '{shared}'",
            a.label, b.label
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..a.len())
        .flat_map(|i| (0..b.len()).map(move |j| (i, j)))
        .collect();
    let (am, bm) = (a.members(), b.members());
    let values = pairs
        .par_iter()
        .map(|&(i, j)| cosine_distance(&am[i].1, &bm[j].1))
        .collect::<Result<Vec<_>>>()?;
    let pair_ids = pairs
        .iter()
        .map(|&(i, j)| (am[i].0.clone(), bm[j].0.clone()))
        .collect();
    Ok(DistanceSample {
        recipe: Recipe::Between {
            left: a.label.clone(),
            right: b.label.clone(),
        },
        pair_ids,
        values,
    })
}

/// Componentwise mean of the member vectors.
pub fn centroid(set: &ConditionSet) -> Result<Vec<f64>> {
    mean_vector(set.members().iter().map(|(_, v)| v.as_slice()))
}

pub(crate) fn mean_vector<'a>(vectors: impl Iterator<Item = &'a [f64]>) -> Result<Vec<f64>> {
    let mut acc: Option<Vec<f64>> = None;
    let mut n = 0usize;
    for v in vectors {
        let a = acc.get_or_insert_with(|| vec![0.0; v.len()]);
        if a.len() != v.len() {
            return Err(Error::Validation("vectors of different dimension".into()));
        }
        a.iter_mut().zip(v).for_each(|(a, x)| *a += x);
        n += 1;
    }
    let mut acc = acc.ok_or_else(|| Error::Domain("centroid of an empty set".into()))?;
    acc.iter_mut().for_each(|a| *a /= n as f64);
    Ok(acc)
}

pub fn distance_to_centroid(probe: &[f64], set: &ConditionSet) -> Result<f64> {
    cosine_distance(probe, &centroid(set)?)
}

/// Cosine distance of every set member to `target`'s centroid, ordered by doc id.
pub fn distances_to_centroid(members: &ConditionSet, target: &ConditionSet) -> Result<DistanceSample> {
    let c = centroid(target)?;
    let mut values = Vec::with_capacity(members.len());
    let mut pair_ids = Vec::with_capacity(members.len());
    for (id, v) in members.members() {
        values.push(cosine_distance(v, &c)?);
        pair_ids.push((id.clone(), format!("centroid({})", target.label)));
    }
    Ok(DistanceSample {
        recipe: Recipe::ToCentroid {
            probe: members.label.clone(),
            label: target.label.clone(),
        },
        pair_ids,
        values,
    })
}

/// Fraction of the empty→core gap closed by a probe:
/// `(d_empty − d_probe) / (d_empty − d_core)`.
pub fn coverage_fraction(d_empty: f64, d_probe: f64, d_core: f64) -> Result<f64> {
    if d_empty <= d_core {
        return Err(Error::Domain(format!(
            "degenerate hierarchy: baseline distance {d_empty} is not above core distance {d_core}"
        )));
    }
    Ok((d_empty - d_probe) / (d_empty - d_core))
}

/// Fraction of random-excerpt distances strictly greater than the probe's.
/// A tie does not count as beaten.
pub fn beats_random_fraction(d_probe: f64, d_randoms: &[f64]) -> Result<f64> {
    if d_randoms.is_empty() {
        return Err(Error::Domain("no random distances to compare against".into()));
    }
    let beaten = d_randoms.iter().filter(|&&d| d > d_probe).count();
    Ok(beaten as f64 / d_randoms.len() as f64)
}

/// Square matrix of pairwise cosine distances in the given order.
pub fn distance_matrix(vectors: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
    let n = vectors.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = cosine_distance(vectors[i], vectors[j])?;
            out[i][j] = d;
            out[j][i] = d;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(label: &str, vs: &[(&str, &[f64])]) -> ConditionSet {
        ConditionSet::new(
            label,
            0,
            vs.iter().map(|(id, v)| (id.to_string(), v.to_vec())).collect(),
        )
        .unwrap()
    }

    #[test]
    fn cosine_reference_values() {
        assert_eq!(cosine_distance(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), 2.0);
        assert!(matches!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(cosine_distance(&[1.0], &[1.0, 0.0]), Err(Error::Validation(_))));
    }

    #[test]
    fn pair_counts() {
        let mk = |n: usize, prefix: &str| {
            ConditionSet::new(
                prefix,
                0,
                (0..n)
                    .map(|i| (format!("{prefix}{i}"), vec![1.0, i as f64 + 1.0]))
                    .collect(),
            )
            .unwrap()
        };
        assert_eq!(pairwise_within(&mk(8, "a")).unwrap().len(), 28);
        assert_eq!(pairwise_within(&mk(7, "b")).unwrap().len(), 21);
        assert_eq!(pairwise_between(&mk(8, "a"), &mk(7, "c")).unwrap().len(), 56);
        assert!(matches!(pairwise_within(&mk(1, "s")), Err(Error::Domain(_))));
    }

    #[test]
    fn within_order_is_lexicographic() {
        let s = set("X", &[("c", &[1.0, 0.0]), ("a", &[0.0, 1.0]), ("b", &[1.0, 1.0])]);
        let d = pairwise_within(&s).unwrap();
        let ids: Vec<_> = d.pair_ids.iter().map(|(x, y)| format!("{x}{y}")).collect();
        assert_eq!(ids, vec!["ab", "ac", "bc"]);
    }

    #[test]
    fn identical_pair_is_zero() {
        let s = set("X", &[("a", &[1.0, 2.0]), ("b", &[1.0, 2.0])]);
        assert_eq!(pairwise_within(&s).unwrap().values, vec![0.0]);
    }

    #[test]
    fn overlapping_ids_rejected() {
        let a = set("A", &[("x", &[1.0, 0.0]), ("y", &[0.0, 1.0])]);
        let b = set("B", &[("x", &[1.0, 0.0])]);
        assert!(matches!(pairwise_between(&a, &b), Err(Error::Validation(_))));
    }

    #[test]
    fn centroid_cases() {
        assert_eq!(centroid(&set("A", &[("a", &[2.0, 3.0])])).unwrap(), vec![2.0, 3.0]);
        let s = set("A", &[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        assert_eq!(centroid(&s).unwrap(), vec![0.5, 0.5]);
        assert_eq!(distance_to_centroid(&[0.5, 0.5], &s).unwrap(), 0.0);
        let one = set("A", &[("a", &[1.0, 0.0])]);
        assert_eq!(distance_to_centroid(&[0.0, 2.0], &one).unwrap(), 1.0);
    }

    #[test]
    fn coverage_examples() {
        let llama = coverage_fraction(0.762, 0.268, 0.006).unwrap();
        assert!((llama - 0.494 / 0.756).abs() < 1e-12);
        assert_eq!(format!("{llama:.3}"), "0.653");
        let gemma = coverage_fraction(0.188, 0.050, 0.002).unwrap();
        assert!((gemma - 0.138 / 0.186).abs() < 1e-12);
        assert_eq!(format!("{gemma:.3}"), "0.742");
        assert_eq!(coverage_fraction(0.5, 0.1, 0.1).unwrap(), 1.0);
        assert!(coverage_fraction(0.1, 0.1, 0.1).is_err());
    }

    #[test]
    fn beats_random_strictness() {
        let mut randoms = vec![0.522];
        randoms.extend((1..30).map(|i| 0.522 + i as f64 * 0.003));
        assert_eq!(beats_random_fraction(0.248, &randoms).unwrap(), 1.0);
        assert_eq!(beats_random_fraction(10.0, &randoms).unwrap(), 0.0);
        assert_eq!(beats_random_fraction(0.5, &[0.5, 0.6]).unwrap(), 0.5);
        assert!(beats_random_fraction(0.5, &[]).is_err());
    }

    #[test]
    fn sample_json_shape() {
        let s = set("X", &[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let json = serde_json::to_value(pairwise_within(&s).unwrap()).unwrap();
        assert_eq!(json["recipe"]["kind"], "within");
        assert_eq!(json["pair_ids"][0][0], "a");
        assert_eq!(json["values"][0], 1.0);
    }

    fn vec_strategy(d: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, d).prop_filter("nonzero", |v| norm(v) > 1e-3)
    }

    proptest! {
        #[test]
        fn cosine_properties(u in vec_strategy(6), v in vec_strategy(6), a in 0.01f64..100.0, b in 0.01f64..100.0) {
            prop_assert!(cosine_distance(&u, &u).unwrap().abs() < 1e-12);
            let d = cosine_distance(&u, &v).unwrap();
            prop_assert!((0.0..=2.0).contains(&d));
            prop_assert_eq!(d, cosine_distance(&v, &u).unwrap());
            let su: Vec<f64> = u.iter().map(|x| x * a).collect();
            let sv: Vec<f64> = v.iter().map(|x| x * b).collect();
            prop_assert!((cosine_distance(&su, &sv).unwrap() - d).abs() < 1e-9);
        }

        #[test]
        fn duplicated_copies_all_zero(v in vec_strategy(5), k in 2usize..7) {
            let s = ConditionSet::new("X", 0, (0..k).map(|i| (format!("d{i}"), v.clone())).collect()).unwrap();
            let w = pairwise_within(&s).unwrap();
            prop_assert_eq!(w.len(), k * (k - 1) / 2);
            prop_assert!(w.values.iter().all(|&x| x.abs() < 1e-12));
        }

        #[test]
        fn euclidean_centroid_jensen(
            a in prop::collection::vec(vec_strategy(4), 1..6),
            b in prop::collection::vec(vec_strategy(4), 1..6),
        ) {
            let sa = ConditionSet::new("A", 0, a.iter().enumerate().map(|(i, v)| (format!("a{i}"), v.clone())).collect()).unwrap();
            let sb = ConditionSet::new("B", 0, b.iter().enumerate().map(|(i, v)| (format!("b{i}"), v.clone())).collect()).unwrap();
            let cc = euclidean_distance(&centroid(&sa).unwrap(), &centroid(&sb).unwrap()).unwrap();
            let mut total = 0.0;
            for (_, x) in sa.members() {
                for (_, y) in sb.members() {
                    total += euclidean_distance(x, y).unwrap();
                }
            }
            let mean = total / (sa.len() * sb.len()) as f64;
            prop_assert!(cc <= mean + 1e-9);
        }
    }
}
