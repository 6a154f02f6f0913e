// SPDX-License-Identifier: MIT OR Apache-2.0

//! How each within-group pair distance moves from layer to layer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pairwise_within, ConditionSet};
use crate::stats::mean;

pub const UP: char = '↑';
pub const DOWN: char = '↓';
pub const FLAT: char = '·';

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairTrajectory {
    pub pair: (String, String),
    pub distances: Vec<f64>,
    pub deltas: Vec<f64>,
    pub pattern: String,
    /// Largest layer-to-layer change (may be negative if the distance only falls).
    pub max_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryReport {
    pub name: String,
    pub layers: Vec<usize>,
    pub pairs: Vec<PairTrajectory>,
    /// Trajectory of the per-layer mean distance.
    pub mean: PairTrajectory,
    pub pattern_counts: BTreeMap<String, usize>,
}

/// Sign pattern of consecutive differences: `↑` rise, `↓` fall, `·` no change.
pub fn classify_sequence(values: &[f64]) -> (Vec<f64>, String) {
    let deltas: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let pattern = deltas
        .iter()
        .map(|&d| {
            if d > 0.0 {
                UP
            } else if d < 0.0 {
                DOWN
            } else {
                FLAT
            }
        })
        .collect();
    (deltas, pattern)
}

pub fn trajectory(pair: (String, String), distances: Vec<f64>) -> Result<PairTrajectory> {
    if distances.len() < 2 {
        return Err(Error::Domain("a trajectory needs at least two layers".into()));
    }
    let (deltas, pattern) = classify_sequence(&distances);
    let max_delta = deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(PairTrajectory {
        pair,
        distances,
        deltas,
        pattern,
        max_delta,
    })
}

/// Per-pair trajectories from the same group measured at several layers.
/// `sets` must be ordered by layer and hold the same documents.
pub fn pair_trajectories(name: &str, sets: &[ConditionSet]) -> Result<TrajectoryReport> {
    if sets.len() < 2 {
        return Err(Error::Domain("pair_trajectories needs at least two layers".into()));
    }
    let ids: Vec<&str> = sets[0].doc_ids().collect();
    for s in &sets[1..] {
        if !s.doc_ids().eq(ids.iter().copied()) {
            return Err(Error::Validation(format!(
                "trajectory '{name}': layer {} holds different documents than layer {}",
                s.layer, sets[0].layer
            )));
        }
    }
    let layers: Vec<usize> = sets.iter().map(|s| s.layer).collect();
    if layers.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Validation(format!(
            "trajectory '{name}': layers must be strictly increasing, got {layers:?}"
        )));
    }
    let samples = sets.iter().map(pairwise_within).collect::<Result<Vec<_>>>()?;
    let n_pairs = samples[0].len();
    let mut pairs = Vec::with_capacity(n_pairs);
    let mut pattern_counts = BTreeMap::new();
    for i in 0..n_pairs {
        let seq = samples.iter().map(|s| s.values[i]).collect();
        let t = trajectory(samples[0].pair_ids[i].clone(), seq)?;
        *pattern_counts.entry(t.pattern.clone()).or_insert(0) += 1;
        pairs.push(t);
    }
    let means = samples.iter().map(|s| mean(&s.values)).collect();
    Ok(TrajectoryReport {
        name: name.to_string(),
        layers,
        pairs,
        mean: trajectory(("mean".into(), "mean".into()), means)?,
        pattern_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rise_then_fall() {
        let t = trajectory(("a".into(), "b".into()), vec![0.0089, 0.0114, 0.0061]).unwrap();
        assert_eq!(t.pattern, "↑↓");
        assert!((t.max_delta - 0.0025).abs() < 1e-12);
        assert_eq!(t.deltas.len(), 2);
    }

    #[test]
    fn monotone_and_constant() {
        assert_eq!(classify_sequence(&[3.0, 2.0, 1.0]).1, "↓↓");
        assert_eq!(classify_sequence(&[0.5, 0.5, 0.5]).1, "··");
        assert!(trajectory(("a".into(), "b".into()), vec![1.0]).is_err());
    }

    fn set(layer: usize, ids: &[&str], scale: f64) -> ConditionSet {
        let members = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.to_string(), vec![1.0, scale * i as f64]))
            .collect();
        ConditionSet::new("B", layer, members).unwrap()
    }

    #[test]
    fn pairs_across_layers() {
        let ids = ["b1", "b2", "b3"];
        let r = pair_trajectories("B", &[set(8, &ids, 0.1), set(16, &ids, 0.3), set(24, &ids, 0.05)]).unwrap();
        assert_eq!(r.pairs.len(), 3);
        assert_eq!(r.pattern_counts.get("↑↓"), Some(&3));
        assert_eq!(r.mean.pattern, "↑↓");
    }

    #[test]
    fn mismatched_members_rejected() {
        let r = pair_trajectories("B", &[set(8, &["x", "y"], 0.1), set(16, &["x", "z"], 0.1)]);
        assert!(matches!(r, Err(Error::Validation(_))));
    }
}
