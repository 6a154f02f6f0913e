// SPDX-License-Identifier: MIT OR Apache-2.0

//! Steering vectors, residual injection, keyword scoring and α-sweep
//! bookkeeping.
//!
//! Steered text generation needs a live model and happens elsewhere; this
//! module covers the vector math and scores recorded responses.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::geometry::{centroid, cosine_distance, norm, ConditionSet};
use crate::matrix::Matrix;
use crate::store::{self, DType, NpyArray};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceLabels {
    pub positive: String,
    pub negative: String,
}

/// Unit-norm centroid-difference direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringVector {
    pub direction: Vec<f64>,
    pub layer: usize,
    pub source_labels: SourceLabels,
    /// Cosine distance between the two source centroids; `None` when either
    /// centroid is the zero vector.
    pub centroid_distance: Option<f64>,
}

/// `(c_pos − c_neg) / ‖c_pos − c_neg‖`.
pub fn compute_steering_vector(pos: &ConditionSet, neg: &ConditionSet) -> Result<SteeringVector> {
    if pos.dim() != neg.dim() {
        return Err(Error::Validation(format!(
            "steering sets differ in dimension: {} vs {}",
            pos.dim(),
            neg.dim()
        )));
    }
    let cp = centroid(pos)?;
    let cn = centroid(neg)?;
    let diff: Vec<f64> = cp.iter().zip(&cn).map(|(a, b)| a - b).collect();
    let len = norm(&diff);
    if len == 0.0 || !len.is_finite() {
        return Err(Error::Degenerate(format!(
            "centroids of '{}' and '{}' coincide; no steering direction",
            pos.label, neg.label
        )));
    }
    let centroid_distance = cosine_distance(&cp, &cn).ok();
    Ok(SteeringVector {
        direction: diff.iter().map(|d| d / len).collect(),
        layer: pos.layer,
        source_labels: SourceLabels {
            positive: pos.label.clone(),
            negative: neg.label.clone(),
        },
        centroid_distance,
    })
}

/// `h ← h + α·v` on every row.
pub fn apply_steering(hidden: &Matrix, v: &SteeringVector, alpha: f64) -> Result<Matrix> {
    apply_steering_masked(hidden, v, alpha, None)
}

/// Like [`apply_steering`], restricted to rows where `mask[row]` is true.
pub fn apply_steering_masked(
    hidden: &Matrix,
    v: &SteeringVector,
    alpha: f64,
    mask: Option<&[bool]>,
) -> Result<Matrix> {
    if hidden.cols() != v.direction.len() {
        return Err(Error::Validation(format!(
            "steering vector has dimension {} but hidden states have {}",
            v.direction.len(),
            hidden.cols()
        )));
    }
    if let Some(m) = mask {
        if m.len() != hidden.rows() {
            return Err(Error::Validation(format!(
                "position mask has {} entries for {} rows",
                m.len(),
                hidden.rows()
            )));
        }
    }
    let mut out = hidden.clone();
    for r in 0..out.rows() {
        if mask.is_some_and(|m| !m[r]) {
            continue;
        }
        for (h, d) in out.row_mut(r).iter_mut().zip(&v.direction) {
            *h = (f64::from(*h) + alpha * d) as f32;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    layer: usize,
    source_labels: SourceLabels,
    centroid_distance: Option<f64>,
    dim: usize,
    norm: f64,
    direction_sha256: String,
}

impl SteeringVector {
    /// Writes `<stem>.npy` (f32 direction) and `<stem>.json` (metadata).
    pub fn save(&self, stem: &Path) -> Result<(PathBuf, PathBuf)> {
        let npy_path = stem.with_extension("npy");
        let json_path = stem.with_extension("json");
        let arr = NpyArray::new(
            vec![self.direction.len()],
            DType::F32,
            self.direction.iter().map(|&d| d as f32).collect(),
        )?;
        let bytes = store::npy::encode(&arr);
        store::write_npy(&npy_path, &arr)?;
        let sidecar = Sidecar {
            layer: self.layer,
            source_labels: self.source_labels.clone(),
            centroid_distance: self.centroid_distance,
            dim: self.direction.len(),
            norm: norm(&self.direction),
            direction_sha256: hex::encode(Sha256::digest(&bytes)),
        };
        store::write_json(&json_path, &sidecar)?;
        Ok((npy_path, json_path))
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let npy_path = stem.with_extension("npy");
        let arr = store::read_npy(&npy_path)?;
        let sidecar: Sidecar = store::read_json(&stem.with_extension("json"))?;
        if arr.shape != [sidecar.dim] {
            return Err(Error::Validation(format!(
                "steering vector file {} has shape {:?}, sidecar says {}",
                npy_path.display(),
                arr.shape,
                sidecar.dim
            )));
        }
        Ok(Self {
            direction: arr.data.iter().map(|&v| f64::from(v)).collect(),
            layer: sidecar.layer,
            source_labels: sidecar.source_labels,
            centroid_distance: sidecar.centroid_distance,
        })
    }
}

/// One behavioural criterion: fires iff every keyword of at least one set
/// occurs in the response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    pub keyword_sets: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringRubric {
    pub criteria: Vec<Criterion>,
}

impl Default for ScoringRubric {
    /// Example rubric with the five criteria: memory continuity, JSON command
    /// production, drives/priorities, metacognitive style, proactivity.
    fn default() -> Self {
        let c = |name: &str, sets: &[&[&str]]| Criterion {
            name: name.to_string(),
            keyword_sets: sets
                .iter()
                .map(|s| s.iter().map(|k| k.to_string()).collect())
                .collect(),
        };
        Self {
            criteria: vec![
                c(
                    "memory_continuity",
                    &[&["remember"], &["previous", "conversation"], &["last time"], &["помню"]],
                ),
                c(
                    "json_commands",
                    &[&["{\"remember\""], &["{\"rag\""], &["{\"", "\":"]],
                ),
                c(
                    "drives_priorities",
                    &[&["drive"], &["priorit"], &["приоритет"]],
                ),
                c(
                    "metacognitive_style",
                    &[&["context", "signal"], &["i notice", "my reasoning"], &["reflect"]],
                ),
                c(
                    "proactivity",
                    &[&["i suggest"], &["proactive"], &["next step"], &["предлагаю"]],
                ),
            ],
        }
    }
}

impl ScoringRubric {
    pub fn validate(&self) -> Result<()> {
        if self.criteria.is_empty() {
            return Err(Error::Config("rubric has no criteria".into()));
        }
        let mut names = HashSet::new();
        for c in &self.criteria {
            if !names.insert(c.name.as_str()) {
                return Err(Error::Config(format!("duplicate rubric criterion '{}'", c.name)));
            }
            if c.keyword_sets.is_empty() || c.keyword_sets.iter().any(|s| s.is_empty()) {
                return Err(Error::Config(format!(
                    "criterion '{}' has an empty keyword set",
                    c.name
                )));
            }
            if c.keyword_sets.iter().flatten().any(|k| normalize_text(k).is_empty()) {
                return Err(Error::Config(format!("criterion '{}' has a blank keyword", c.name)));
            }
        }
        Ok(())
    }

    /// SHA-256 over the compact JSON form, for report provenance.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("rubric serializes");
        hex::encode(Sha256::digest(json))
    }
}

/// NFKC, lower case, whitespace runs collapsed to single spaces, trimmed.
pub fn normalize_text(text: &str) -> String {
    let folded: String = text.nfkc().collect::<String>().to_lowercase();
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseScore {
    pub score: u32,
    pub per_criterion: Vec<u8>,
}

pub fn score_response(text: &str, rubric: &ScoringRubric) -> Result<ResponseScore> {
    rubric.validate()?;
    let hay = normalize_text(text);
    let per_criterion: Vec<u8> = rubric
        .criteria
        .iter()
        .map(|c| {
            let fired = c
                .keyword_sets
                .iter()
                .any(|set| set.iter().all(|k| hay.contains(&normalize_text(k))));
            u8::from(fired)
        })
        .collect();
    Ok(ResponseScore {
        score: per_criterion.iter().map(|&v| u32::from(v)).sum(),
        per_criterion,
    })
}

/// A recorded model response to score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedResponse {
    pub condition: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub prompt: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub condition: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub n_prompts: usize,
    /// Mean over prompts of the per-prompt score sums.
    pub mean_score: f64,
    /// Mean firing rate of each criterion.
    pub per_criterion: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rubric_hash: String,
    pub criteria: Vec<String>,
    pub rows: Vec<SweepRow>,
}

/// Score every response and aggregate by (condition, α) in first-seen order.
pub fn score_sweep(responses: &[RecordedResponse], rubric: &ScoringRubric) -> Result<SweepResult> {
    rubric.validate()?;
    let k = rubric.criteria.len();
    let mut rows: Vec<(SweepRow, Vec<f64>)> = Vec::new();
    for r in responses {
        let s = score_response(&r.text, rubric)?;
        let idx = match rows
            .iter()
            .position(|(row, _)| row.condition == r.condition && row.alpha == r.alpha)
        {
            Some(i) => i,
            None => {
                rows.push((
                    SweepRow {
                        condition: r.condition.clone(),
                        alpha: r.alpha,
                        n_prompts: 0,
                        mean_score: 0.0,
                        per_criterion: vec![0.0; k],
                    },
                    Vec::new(),
                ));
                rows.len() - 1
            }
        };
        let (row, totals) = &mut rows[idx];
        row.n_prompts += 1;
        totals.push(f64::from(s.score));
        for (acc, &v) in row.per_criterion.iter_mut().zip(&s.per_criterion) {
            *acc += f64::from(v);
        }
    }
    let rows = rows
        .into_iter()
        .map(|(mut row, totals)| {
            let n = row.n_prompts as f64;
            row.mean_score = totals.iter().sum::<f64>() / n;
            row.per_criterion.iter_mut().for_each(|v| *v /= n);
            row
        })
        .collect();
    Ok(SweepResult {
        rubric_hash: rubric.hash(),
        criteria: rubric.criteria.iter().map(|c| c.name.clone()).collect(),
        rows,
    })
}

/// `(steered − baseline) / (full_doc − baseline)`.
pub fn gap_fraction(baseline: f64, steered: f64, full_doc: f64) -> Result<f64> {
    if full_doc == baseline {
        return Err(Error::Domain(
            "baseline and full-document scores are equal; gap is zero".into(),
        ));
    }
    Ok((steered - baseline) / (full_doc - baseline))
}

/// Where the α sweep peaks and what happens beyond the peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub best_alpha: f64,
    pub best_score: f64,
    /// Scores strictly decrease for every α above the best one.
    pub monotone_decline_after_best: bool,
    /// The best α is neither the smallest nor the largest tried, or scores
    /// decline after it: more steering is not uniformly better.
    pub non_monotone: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_doc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_fraction: Option<f64>,
}

/// Summarise (α, mean score) points plus optional baseline/full-doc scores.
/// The first α wins ties for the best score.
pub fn summarize_sweep(
    points: &[(f64, f64)],
    baseline: Option<f64>,
    full_doc: Option<f64>,
) -> Result<SweepSummary> {
    if points.is_empty() {
        return Err(Error::Domain("empty α sweep".into()));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (best_idx, &(best_alpha, best_score)) = sorted
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, &(f64, f64))>, (i, p)| match acc {
            Some((_, b)) if b.1 >= p.1 => acc,
            _ => Some((i, p)),
        })
        .expect("non-empty");
    let tail = &sorted[best_idx..];
    let monotone_decline_after_best =
        tail.len() > 1 && tail.windows(2).all(|w| w[1].1 < w[0].1);
    let non_monotone = monotone_decline_after_best || (best_idx > 0 && best_idx + 1 < sorted.len());
    let gap = match (baseline, full_doc) {
        (Some(b), Some(f)) => Some(gap_fraction(b, best_score, f)?),
        _ => None,
    };
    Ok(SweepSummary {
        best_alpha,
        best_score,
        monotone_decline_after_best,
        non_monotone,
        baseline,
        full_doc,
        gap_fraction: gap,
    })
}

/// Summarise a scored sweep using condition names for the three arms.
pub fn summarize_sweep_result(
    sweep: &SweepResult,
    baseline_label: &str,
    steered_label: &str,
    full_label: &str,
) -> Result<SweepSummary> {
    let find = |label: &str| {
        sweep
            .rows
            .iter()
            .find(|r| r.condition == label && r.alpha.is_none())
            .map(|r| r.mean_score)
    };
    let points: Vec<(f64, f64)> = sweep
        .rows
        .iter()
        .filter(|r| r.condition == steered_label)
        .filter_map(|r| r.alpha.map(|a| (a, r.mean_score)))
        .collect();
    summarize_sweep(&points, find(baseline_label), find(full_label))
}
