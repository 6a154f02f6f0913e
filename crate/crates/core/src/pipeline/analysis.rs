// SPDX-License-Identifier: MIT OR Apache-2.0

//! The layer × comparison × pooling test battery.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Comparison, ExperimentConfig};
use super::loader::VectorTable;
use super::report::{
    BeatsRandomRow, Bonferroni, ComparisonReport, CoverageRow, HierarchyCheck, HierarchyRow, Mode,
    ProbeRow, ResultsDocument, SampleOrigin,
};
use super::trajectory::pair_trajectories;
use crate::error::{Error, Result};
use crate::geometry::{
    beats_random_fraction, coverage_fraction, distance_to_centroid, distances_to_centroid,
    pairwise_between, pairwise_within, ConditionSet,
};
use crate::pooling::PoolingSpec;
use crate::prng::PrngSpec;
use crate::stats::{
    bonferroni_threshold, bootstrap_ci, cohens_d, mann_whitney_u, permutation_test_tailed,
    summarize, welch_t, IntervalEstimate, MannWhitney, ResamplingResult, Tail, TestResult,
};
use crate::store::{validate_token_budget, ExperimentManifest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupStats {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
    pub ci: IntervalEstimate,
}

/// Statistics for one comparison at one layer. `within` is the tighter
/// group under the hypothesis, `between` the reference group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerReport {
    pub layer: usize,
    pub within: GroupStats,
    pub between: GroupStats,
    /// Signed: positive when `between` has the larger mean.
    pub cohens_d: f64,
    pub welch: TestResult,
    pub permutation: ResamplingResult,
    pub mann_whitney: MannWhitney,
    pub threshold: f64,
    pub significant: bool,
}

impl LayerReport {
    /// The p-values that must all clear the threshold.
    pub fn p_values(&self) -> [f64; 3] {
        [
            self.welch.p_value,
            self.permutation.p_value,
            self.mann_whitney.result.p_value,
        ]
    }

    pub fn recompute_significance(&self) -> bool {
        self.p_values().iter().all(|&p| p < self.threshold)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestSettings {
    pub n_permutations: usize,
    pub n_bootstrap: usize,
    pub ci_level: f64,
    pub threshold: f64,
    pub prng: PrngSpec,
}

impl TestSettings {
    pub fn from_config(cfg: &ExperimentConfig, n_layers: usize) -> Result<Self> {
        Ok(Self {
            n_permutations: cfg.n_permutations,
            n_bootstrap: cfg.n_bootstrap,
            ci_level: cfg.ci_level,
            threshold: bonferroni_threshold(cfg.alpha, n_layers)?,
            prng: cfg.prng.clone(),
        })
    }
}

/// Stream id for a cell, independent of evaluation order.
pub(crate) fn cell_stream(parts: &[&str]) -> u64 {
    let digest = Sha256::digest(parts.join("\u{1f}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Run the full battery on two distance samples.
pub fn analyze_samples(
    layer: usize,
    within: &[f64],
    between: &[f64],
    tail: Tail,
    settings: &TestSettings,
    stream: u64,
) -> Result<LayerReport> {
    let seeds = settings.prng.derive(stream);
    let group = |values: &[f64], role: u64| -> Result<GroupStats> {
        let s = summarize(values);
        Ok(GroupStats {
            mean: s.mean,
            sd: s.sd,
            n: s.n,
            ci: bootstrap_ci(values, settings.n_bootstrap, settings.ci_level, &seeds.derive(role))?,
        })
    };
    let w = group(within, 1)?;
    let b = group(between, 2)?;
    let welch = welch_t(within, between, tail)?;
    let permutation =
        permutation_test_tailed(within, between, settings.n_permutations, &seeds.derive(3), tail)?;
    let mann_whitney = mann_whitney_u(within, between, tail)?;
    let mut report = LayerReport {
        layer,
        within: w,
        between: b,
        cohens_d: cohens_d(within, between)?,
        welch,
        permutation,
        mann_whitney,
        threshold: settings.threshold,
        significant: false,
    };
    report.significant = report.recompute_significance();
    Ok(report)
}

struct Cell<'a> {
    comparison: &'a Comparison,
    pooling: &'a PoolingSpec,
    layer: usize,
}

fn comparison_samples(
    table: &VectorTable,
    manifest: &ExperimentManifest,
    cell: &Cell<'_>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    match cell.comparison {
        Comparison::WithinVsBetween { within, between, .. } => {
            let w = table.condition_set(manifest, within, cell.layer, cell.pooling)?;
            let b = table.condition_set(manifest, std::slice::from_ref(between), cell.layer, cell.pooling)?;
            Ok((pairwise_within(&w)?.values, pairwise_between(&w, &b)?.values))
        }
        Comparison::WithinVsWithin { first, second, .. } => {
            let f = table.condition_set(manifest, first, cell.layer, cell.pooling)?;
            let s = table.condition_set(manifest, second, cell.layer, cell.pooling)?;
            Ok((pairwise_within(&f)?.values, pairwise_within(&s)?.values))
        }
    }
}

fn comparison_labels(c: &Comparison) -> (String, String) {
    match c {
        Comparison::WithinVsBetween { within, between, .. } => (within.join("+"), between.clone()),
        Comparison::WithinVsWithin { first, second, .. } => (first.join("+"), second.join("+")),
    }
}

/// Everything `run_analysis` computed, before serialization.
#[derive(Debug, Clone)]
pub struct AnalysisOutput {
    pub document: ResultsDocument,
    pub manifest: ExperimentManifest,
    pub table: VectorTable,
    pub layers: Vec<usize>,
}

/// Full analysis from activations. For replay fixtures see
/// [`super::replay::run_replay`].
pub fn run_analysis(cfg: &ExperimentConfig) -> Result<AnalysisOutput> {
    let manifest_path = cfg
        .manifest_path()
        .ok_or_else(|| Error::Config("analysis needs a manifest".into()))?;
    let manifest = ExperimentManifest::load(&manifest_path)?;
    cfg.check_against(&manifest)?;
    let layers = cfg.effective_layers(&manifest);
    let table = VectorTable::load(&manifest, &layers, &cfg.pooling)?;
    let settings = TestSettings::from_config(cfg, layers.len())?;

    let mut cells: Vec<Cell<'_>> = Vec::new();
    for c in &cfg.comparisons {
        for p in &cfg.pooling {
            for &l in &layers {
                cells.push(Cell {
                    comparison: c,
                    pooling: p,
                    layer: l,
                });
            }
        }
    }
    let reports = cells
        .par_iter()
        .map(|cell| {
            let (w, b) = comparison_samples(&table, &manifest, cell)?;
            let stream = cell_stream(&[
                cell.comparison.name(),
                &cell.pooling.key(),
                &cell.layer.to_string(),
            ]);
            analyze_samples(cell.layer, &w, &b, cell.comparison.tail(), &settings, stream)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut comparisons = Vec::new();
    let mut it = reports.into_iter();
    for c in &cfg.comparisons {
        let (first, second) = comparison_labels(c);
        for p in &cfg.pooling {
            comparisons.push(ComparisonReport {
                name: c.name().to_string(),
                tail: c.tail(),
                first: first.clone(),
                second: second.clone(),
                pooling: p.to_string(),
                origin: SampleOrigin::Activations,
                layers: it.by_ref().take(layers.len()).collect(),
            });
        }
    }

    let probe_rows = probe_rows(cfg, &manifest, &table, &layers)?;
    let coverage = coverage_rows(&cfg.coverage, &probe_rows)?;
    let hierarchy = hierarchy_check(&cfg.hierarchy, &probe_rows);
    let beats_random = beats_random_rows(cfg, &manifest, &table, &layers, &probe_rows)?;

    let mut trajectories = Vec::new();
    for t in &cfg.trajectories {
        for p in &cfg.pooling {
            let sets = layers
                .iter()
                .map(|&l| table.condition_set(&manifest, &t.labels, l, p))
                .collect::<Result<Vec<ConditionSet>>>()?;
            let name = if cfg.pooling.len() > 1 {
                format!("{} ({p})", t.name)
            } else {
                t.name.clone()
            };
            trajectories.push(pair_trajectories(&name, &sets)?);
        }
    }

    let token_budget = match manifest.reference_doc {
        Some(_) => Some(validate_token_budget(&manifest)?),
        None => None,
    };

    let document = ResultsDocument {
        schema_version: ResultsDocument::SCHEMA_VERSION,
        timestamp: ResultsDocument::now(),
        seed: cfg.prng.seed,
        prng_algorithm: cfg.prng.algorithm.clone(),
        config_hash: cfg.hash(),
        model_id: manifest.model_id.clone(),
        mode: Mode::Activations,
        layers: layers.clone(),
        bonferroni: Bonferroni {
            alpha: cfg.alpha,
            m: layers.len(),
            threshold: settings.threshold,
        },
        comparisons,
        probes: non_empty(probe_rows),
        coverage: non_empty(coverage),
        hierarchy,
        beats_random: non_empty(beats_random),
        trajectories: non_empty(trajectories),
        sweep: None,
        token_budget,
        notes: Vec::new(),
    };
    document.check()?;
    Ok(AnalysisOutput {
        document,
        manifest,
        table,
        layers,
    })
}

pub(crate) fn non_empty<T>(v: Vec<T>) -> Option<Vec<T>> {
    if v.is_empty() {
        None
    } else {
        Some(v)
    }
}

fn probe_rows(
    cfg: &ExperimentConfig,
    manifest: &ExperimentManifest,
    table: &VectorTable,
    layers: &[usize],
) -> Result<Vec<ProbeRow>> {
    let mut rows = Vec::new();
    for p in &cfg.pooling {
        for &layer in layers {
            for probe in &cfg.probes {
                let target = table.condition_set(manifest, &probe.target, layer, p)?;
                let v = table.get(p, layer, &probe.doc).ok_or_else(|| Error::MissingActivation {
                    doc_id: probe.doc.clone(),
                    layer,
                    pooling: p.to_string(),
                    path: manifest
                        .find_doc(&probe.doc)
                        .map(|(_, d)| manifest.doc_dir(d))
                        .unwrap_or_default(),
                })?;
                rows.push(ProbeRow {
                    name: probe.name.clone(),
                    pooling: p.to_string(),
                    layer,
                    distance: distance_to_centroid(v, &target)?,
                });
            }
        }
    }
    Ok(rows)
}

fn find_probe<'a>(rows: &'a [ProbeRow], name: &str, pooling: &str, layer: usize) -> Option<&'a ProbeRow> {
    rows.iter()
        .find(|r| r.name == name && r.pooling == pooling && r.layer == layer)
}

/// Coverage for every (pooling, layer) where all three probes were measured.
pub fn coverage_rows(specs: &[super::config::CoverageSpec], rows: &[ProbeRow]) -> Result<Vec<CoverageRow>> {
    let mut out = Vec::new();
    for spec in specs {
        for r in rows.iter().filter(|r| r.name == spec.probe) {
            let (Some(e), Some(c)) = (
                find_probe(rows, &spec.empty, &r.pooling, r.layer),
                find_probe(rows, &spec.core, &r.pooling, r.layer),
            ) else {
                continue;
            };
            out.push(CoverageRow {
                probe: spec.probe.clone(),
                empty: spec.empty.clone(),
                core: spec.core.clone(),
                pooling: r.pooling.clone(),
                layer: r.layer,
                fraction: coverage_fraction(e.distance, r.distance, c.distance)?,
            });
        }
    }
    Ok(out)
}

/// Check that probe distances strictly decrease in the given order.
pub fn hierarchy_check(order: &[String], rows: &[ProbeRow]) -> Option<HierarchyCheck> {
    if order.len() < 2 {
        return None;
    }
    let mut cells: Vec<(String, usize)> = rows
        .iter()
        .filter(|r| r.name == order[0])
        .map(|r| (r.pooling.clone(), r.layer))
        .collect();
    cells.dedup();
    let checks: Vec<HierarchyRow> = cells
        .into_iter()
        .map(|(pooling, layer)| {
            let d: Vec<Option<f64>> = order
                .iter()
                .map(|n| find_probe(rows, n, &pooling, layer).map(|r| r.distance))
                .collect();
            let holds = d.iter().all(Option::is_some)
                && d.windows(2).all(|w| w[0].unwrap() > w[1].unwrap());
            HierarchyRow { pooling, layer, holds }
        })
        .collect();
    let holds = !checks.is_empty() && checks.iter().all(|c| c.holds);
    Some(HierarchyCheck {
        order: order.to_vec(),
        rows: checks,
        holds,
    })
}

fn beats_random_rows(
    cfg: &ExperimentConfig,
    manifest: &ExperimentManifest,
    table: &VectorTable,
    layers: &[usize],
    probes: &[ProbeRow],
) -> Result<Vec<BeatsRandomRow>> {
    let mut out = Vec::new();
    for spec in &cfg.beats_random {
        let probe = cfg
            .probes
            .iter()
            .find(|p| p.name == spec.probe)
            .expect("validated probe reference");
        for p in &cfg.pooling {
            for &layer in layers {
                let target = table.condition_set(manifest, &probe.target, layer, p)?;
                let randoms = table.condition_set(manifest, std::slice::from_ref(&spec.randoms), layer, p)?;
                let d = distances_to_centroid(&randoms, &target)?;
                let probe_distance = find_probe(probes, &probe.name, &p.to_string(), layer)
                    .expect("probe rows cover every cell")
                    .distance;
                out.push(BeatsRandomRow {
                    probe: spec.probe.clone(),
                    randoms: spec.randoms.clone(),
                    pooling: p.to_string(),
                    layer,
                    probe_distance,
                    n_random: d.len(),
                    min_random: d.values.iter().copied().fold(f64::INFINITY, f64::min),
                    fraction: beats_random_fraction(probe_distance, &d.values)?,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> TestSettings {
        TestSettings {
            n_permutations: 2000,
            n_bootstrap: 1000,
            ci_level: 0.95,
            threshold: 0.05 / 3.0,
            prng: PrngSpec::new(42),
        }
    }

    #[test]
    fn separated_samples_are_significant() {
        let w: Vec<f64> = (0..28).map(|i| 0.010 + 0.0001 * (i % 7) as f64).collect();
        let b: Vec<f64> = (0..56).map(|i| 0.020 + 0.0001 * (i % 9) as f64).collect();
        let r = analyze_samples(8, &w, &b, Tail::Less, &settings(), 1).unwrap();
        assert!(r.significant);
        assert!(r.cohens_d > 0.0);
        assert_eq!(r.within.n, 28);
        assert_eq!(r.mann_whitney.u_a, 0.0);
    }

    #[test]
    fn identical_groups_not_significant() {
        let w = [0.1, 0.2, 0.3, 0.4];
        let r = analyze_samples(1, &w, &w, Tail::Less, &settings(), 1).unwrap();
        assert!(!r.significant);
        assert_eq!(r.cohens_d, 0.0);
        assert_eq!(r.recompute_significance(), r.significant);
    }

    #[test]
    fn cell_streams_are_order_free() {
        assert_eq!(cell_stream(&["h1", "mean", "8"]), cell_stream(&["h1", "mean", "8"]));
        assert_ne!(cell_stream(&["h1", "mean", "8"]), cell_stream(&["h1", "mean", "16"]));
    }

    #[test]
    fn hierarchy_detects_violation() {
        let row = |name: &str, layer, distance| ProbeRow {
            name: name.into(),
            pooling: "mean/full".into(),
            layer,
            distance,
        };
        let rows = vec![row("empty", 8, 0.8), row("core", 8, 0.01), row("empty", 16, 0.1), row("core", 16, 0.2)];
        let h = hierarchy_check(&["empty".into(), "core".into()], &rows).unwrap();
        assert!(h.rows[0].holds);
        assert!(!h.rows[1].holds);
        assert!(!h.holds);
    }
}
