// SPDX-License-Identifier: MIT OR Apache-2.0

//! Replay mode: run the report arithmetic on published numbers instead of
//! activations.
//!
//! A comparison layer takes either the per-pair distances (`values`) or only
//! `mean`, `sd` and `n`. In the latter case a deterministic sample with exactly
//! those moments is synthesized (evenly spaced points, standardized), so
//! means and SDs replay exactly while test statistics are only indicative.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::analysis::{analyze_samples, cell_stream, coverage_rows, hierarchy_check, non_empty, TestSettings};
use super::config::{CoverageSpec, ExperimentConfig};
use super::report::{
    BeatsRandomRow, Bonferroni, ComparisonReport, Mode, ProbeRow, ResultsDocument, SampleOrigin,
};
use super::trajectory::{trajectory, TrajectoryReport};
use crate::error::{Error, Result};
use crate::geometry::beats_random_fraction;
use crate::stats::{bonferroni_threshold, cohens_d_from_summary, Summary, Tail};
use crate::steering::summarize_sweep;

/// Absolute gap between a reported and a recomputed effect size that
/// triggers a note in the report.
pub const EFFECT_SIZE_TOLERANCE: f64 = 0.05;

pub const REPLAY_POOLING: &str = "replay";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleSource {
    Values { values: Vec<f64> },
    Summary { mean: f64, sd: f64, n: usize },
}

impl SampleSource {
    pub fn materialize(&self) -> Result<Vec<f64>> {
        match self {
            SampleSource::Values { values } => Ok(values.clone()),
            SampleSource::Summary { mean, sd, n } => synthesize_sample(*mean, *sd, *n),
        }
    }

    pub fn summary(&self) -> Result<Summary> {
        match self {
            SampleSource::Values { values } => Ok(crate::stats::summarize(values)),
            SampleSource::Summary { mean, sd, n } => Ok(Summary {
                mean: *mean,
                sd: *sd,
                n: *n,
            }),
        }
    }
}

/// `n` evenly spaced values with sample mean `mean` and sample SD `sd`.
pub fn synthesize_sample(mean: f64, sd: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Domain("a synthesized sample needs n >= 2".into()));
    }
    if !(sd >= 0.0 && sd.is_finite() && mean.is_finite()) {
        return Err(Error::Domain(format!("invalid summary: mean {mean}, sd {sd}")));
    }
    let nf = n as f64;
    // SD (n − 1 denominator) of 0, 1, …, n − 1
    let spacing_sd = (nf * (nf + 1.0) / 12.0).sqrt();
    let mid = (nf - 1.0) / 2.0;
    Ok((0..n)
        .map(|i| mean + sd * (i as f64 - mid) / spacing_sd)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reported {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cohens_d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mw_u: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayLayer {
    pub layer: usize,
    pub within: SampleSource,
    pub between: SampleSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported: Option<Reported>,
}

fn default_tail() -> Tail {
    Tail::Less
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayComparison {
    pub name: String,
    pub first: String,
    pub second: String,
    #[serde(default = "default_tail")]
    pub tail: Tail,
    pub layers: Vec<ReplayLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayProbe {
    pub name: String,
    pub layer: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayBeatsRandom {
    pub probe: String,
    pub layer: usize,
    pub probe_distance: f64,
    /// Control distances; publishing only the minimum is enough to decide
    /// whether every control was beaten.
    pub random_distances: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_random: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayTrajectory {
    pub name: String,
    /// Mean distance per layer, aligned with the fixture's `layers`.
    pub mean: Vec<f64>,
    #[serde(default)]
    pub pairs: Vec<ReplayPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayPair {
    pub pair: (String, String),
    pub distances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplaySweep {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_doc: Option<f64>,
    /// `[alpha, mean score]` pairs.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayFixture {
    pub model_id: String,
    pub layers: Vec<usize>,
    #[serde(default)]
    pub comparisons: Vec<ReplayComparison>,
    #[serde(default)]
    pub probes: Vec<ReplayProbe>,
    #[serde(default)]
    pub coverage: Vec<CoverageSpec>,
    #[serde(default)]
    pub hierarchy: Vec<String>,
    #[serde(default)]
    pub beats_random: Vec<ReplayBeatsRandom>,
    #[serde(default)]
    pub trajectories: Vec<ReplayTrajectory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<ReplaySweep>,
}

impl ReplayFixture {
    pub fn load(path: &Path) -> Result<Self> {
        let f: ReplayFixture = crate::store::read_json(path)?;
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("replay fixture lists no layers".into()));
        }
        for c in &self.comparisons {
            for l in &c.layers {
                if !self.layers.contains(&l.layer) {
                    return Err(Error::Config(format!(
                        "replay comparison '{}' uses layer {} not in 'layers'",
                        c.name, l.layer
                    )));
                }
            }
        }
        for t in &self.trajectories {
            if t.mean.len() != self.layers.len() || t.pairs.iter().any(|p| p.distances.len() != self.layers.len()) {
                return Err(Error::Config(format!(
                    "replay trajectory '{}' needs one value per layer",
                    t.name
                )));
            }
        }
        Ok(())
    }
}

/// Build the results document from a replay fixture. Test settings (resample
/// counts, seed, alpha) come from `cfg`.
pub fn run_replay(fixture: &ReplayFixture, cfg: &ExperimentConfig) -> Result<ResultsDocument> {
    fixture.validate()?;
    let m = fixture.layers.len();
    let settings = TestSettings {
        threshold: bonferroni_threshold(cfg.alpha, m)?,
        ..TestSettings::from_config(cfg, m)?
    };
    let mut notes = Vec::new();
    let mut comparisons = Vec::new();
    for c in &fixture.comparisons {
        let layers = c
            .layers
            .par_iter()
            .map(|l| {
                let w = l.within.materialize()?;
                let b = l.between.materialize()?;
                let stream = cell_stream(&[&c.name, REPLAY_POOLING, &l.layer.to_string()]);
                analyze_samples(l.layer, &w, &b, c.tail, &settings, stream)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut any_summary = false;
        for (l, report) in c.layers.iter().zip(&layers) {
            any_summary |= matches!(l.within, SampleSource::Summary { .. })
                || matches!(l.between, SampleSource::Summary { .. });
            let Some(rep) = &l.reported else { continue };
            if let Some(d) = rep.cohens_d {
                let recomputed = cohens_d_from_summary(&l.within.summary()?, &l.between.summary()?)?;
                if (recomputed - d).abs() > EFFECT_SIZE_TOLERANCE {
                    notes.push(format!(
                        "{} layer {}: Cohen's d recomputed from the reported means and SDs with the pooled-SD formula is {:.2}, but the source reports {}; the recomputed value is used",
                        c.name, l.layer, recomputed, d
                    ));
                }
            }
            if let (Some(u), SampleSource::Values { .. }, SampleSource::Values { .. }) =
                (rep.mw_u, &l.within, &l.between)
            {
                if (report.mann_whitney.u_a - u).abs() > 1e-9 {
                    notes.push(format!(
                        "{} layer {}: Mann-Whitney U recomputed as {} but the source reports {}",
                        c.name, l.layer, report.mann_whitney.u_a, u
                    ));
                }
            }
        }
        if any_summary {
            notes.push(format!(
                "{}: samples were synthesized from published mean/SD/n; test statistics are indicative only",
                c.name
            ));
        }
        let all_values = c.layers.iter().all(|l| {
            matches!(l.within, SampleSource::Values { .. }) && matches!(l.between, SampleSource::Values { .. })
        });
        comparisons.push(ComparisonReport {
            name: c.name.clone(),
            tail: c.tail,
            first: c.first.clone(),
            second: c.second.clone(),
            pooling: REPLAY_POOLING.into(),
            origin: if all_values {
                SampleOrigin::ReplayValues
            } else {
                SampleOrigin::ReplaySummary
            },
            layers,
        });
    }

    let probes: Vec<ProbeRow> = fixture
        .probes
        .iter()
        .map(|p| ProbeRow {
            name: p.name.clone(),
            pooling: REPLAY_POOLING.into(),
            layer: p.layer,
            distance: p.distance,
        })
        .collect();
    let coverage = coverage_rows(&fixture.coverage, &probes)?;
    let hierarchy = hierarchy_check(&fixture.hierarchy, &probes);

    let beats_random = fixture
        .beats_random
        .iter()
        .map(|b| {
            Ok(BeatsRandomRow {
                probe: b.probe.clone(),
                randoms: "random".into(),
                pooling: REPLAY_POOLING.into(),
                layer: b.layer,
                probe_distance: b.probe_distance,
                n_random: b.n_random.unwrap_or(b.random_distances.len()),
                min_random: b.random_distances.iter().copied().fold(f64::INFINITY, f64::min),
                fraction: beats_random_fraction(b.probe_distance, &b.random_distances)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let trajectories = fixture
        .trajectories
        .iter()
        .map(|t| {
            let mut pairs = Vec::new();
            let mut counts = std::collections::BTreeMap::new();
            for p in &t.pairs {
                let tr = trajectory(p.pair.clone(), p.distances.clone())?;
                *counts.entry(tr.pattern.clone()).or_insert(0) += 1;
                pairs.push(tr);
            }
            Ok(TrajectoryReport {
                name: t.name.clone(),
                layers: fixture.layers.clone(),
                pairs,
                mean: trajectory(("mean".into(), "mean".into()), t.mean.clone())?,
                pattern_counts: counts,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let sweep = match &fixture.sweep {
        Some(s) => Some(summarize_sweep(&s.points, s.baseline, s.full_doc)?),
        None => None,
    };

    let doc = ResultsDocument {
        schema_version: ResultsDocument::SCHEMA_VERSION,
        timestamp: ResultsDocument::now(),
        seed: cfg.prng.seed,
        prng_algorithm: cfg.prng.algorithm.clone(),
        config_hash: cfg.hash(),
        model_id: fixture.model_id.clone(),
        mode: Mode::Replay,
        layers: fixture.layers.clone(),
        bonferroni: Bonferroni {
            alpha: cfg.alpha,
            m,
            threshold: settings.threshold,
        },
        comparisons,
        probes: non_empty(probes),
        coverage: non_empty(coverage),
        hierarchy,
        beats_random: non_empty(beats_random),
        trajectories: non_empty(trajectories),
        sweep,
        token_budget: None,
        notes,
    };
    doc.check()?;
    Ok(doc)
}
