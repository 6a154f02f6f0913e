// SPDX-License-Identifier: MIT OR Apache-2.0

//! Results document: JSON emission, schema validation and Markdown rendering.
//!
//! Field order in the JSON output follows struct declaration order, so two
//! runs over the same inputs differ only in `timestamp`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::analysis::LayerReport;
use super::trajectory::TrajectoryReport;
use crate::error::{Error, Result};
use crate::stats::Tail;
use crate::steering::SweepSummary;
use crate::store::TokenCheck;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Activations,
    Replay,
}

/// Where a comparison's distance samples came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleOrigin {
    Activations,
    /// Published per-pair distances.
    ReplayValues,
    /// Synthesized from published mean, SD and n; only the moments are real.
    ReplaySummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bonferroni {
    pub alpha: f64,
    pub m: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonReport {
    pub name: String,
    pub tail: Tail,
    pub first: String,
    pub second: String,
    pub pooling: String,
    pub origin: SampleOrigin,
    pub layers: Vec<LayerReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeRow {
    pub name: String,
    pub pooling: String,
    pub layer: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageRow {
    pub probe: String,
    pub empty: String,
    pub core: String,
    pub pooling: String,
    pub layer: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyRow {
    pub pooling: String,
    pub layer: usize,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyCheck {
    pub order: Vec<String>,
    pub rows: Vec<HierarchyRow>,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeatsRandomRow {
    pub probe: String,
    pub randoms: String,
    pub pooling: String,
    pub layer: usize,
    pub probe_distance: f64,
    pub n_random: usize,
    pub min_random: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultsDocument {
    pub schema_version: u32,
    pub timestamp: String,
    pub seed: u64,
    pub prng_algorithm: String,
    pub config_hash: String,
    pub model_id: String,
    pub mode: Mode,
    pub layers: Vec<usize>,
    pub bonferroni: Bonferroni,
    pub comparisons: Vec<ComparisonReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<Vec<ProbeRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<Vec<CoverageRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hierarchy: Option<HierarchyCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beats_random: Option<Vec<BeatsRandomRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<Vec<TrajectoryReport>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_budget: Option<Vec<TokenCheck>>,
    #[serde(default)]
    pub notes: Vec<String>,
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.into(),
        message: message.into(),
    }
}

fn check_p(path: String, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(schema(path, format!("p-value {p} outside [0, 1]")))
    }
}

fn check_finite(path: String, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(schema(path, format!("expected a finite number, got {v}")))
    }
}

impl ResultsDocument {
    pub const SCHEMA_VERSION: u32 = 1;

    pub fn now() -> String {
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("document serializes");
        s.push('\n');
        s
    }

    /// Same document with the timestamp blanked, for run-to-run comparison.
    pub fn without_timestamp(&self) -> Self {
        Self {
            timestamp: String::new(),
            ..self.clone()
        }
    }

    /// Semantic checks beyond the type structure. Errors name the offending
    /// field path.
    pub fn check(&self) -> Result<()> {
        if self.schema_version != Self::SCHEMA_VERSION {
            return Err(schema(
                "schema_version",
                format!("expected {}, got {}", Self::SCHEMA_VERSION, self.schema_version),
            ));
        }
        chrono::DateTime::parse_from_rfc3339(&self.timestamp)
            .map_err(|e| schema("timestamp", format!("not an ISO-8601 timestamp: {e}")))?;
        if self.config_hash.len() != 64 || !self.config_hash.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(schema("config_hash", "expected 64 hex digits"));
        }
        let b = &self.bonferroni;
        if b.m == 0 || (b.threshold - b.alpha / b.m as f64).abs() > 1e-12 * b.threshold.max(1.0) {
            return Err(schema("bonferroni.threshold", "threshold must equal alpha / m"));
        }
        for (i, c) in self.comparisons.iter().enumerate() {
            for (j, l) in c.layers.iter().enumerate() {
                let at = format!("comparisons[{i}].layers[{j}]");
                if !self.layers.contains(&l.layer) {
                    return Err(schema(format!("{at}.layer"), format!("layer {} not listed in 'layers'", l.layer)));
                }
                check_p(format!("{at}.welch.p_value"), l.welch.p_value)?;
                check_p(format!("{at}.permutation.p_value"), l.permutation.p_value)?;
                check_p(format!("{at}.mann_whitney.result.p_value"), l.mann_whitney.result.p_value)?;
                check_finite(format!("{at}.cohens_d"), l.cohens_d)?;
                for (role, g) in [("within", &l.within), ("between", &l.between)] {
                    check_finite(format!("{at}.{role}.mean"), g.mean)?;
                    if g.ci.lo > g.ci.hi {
                        return Err(schema(format!("{at}.{role}.ci"), "lo exceeds hi"));
                    }
                }
                if l.welch.n1 != l.within.n || l.welch.n2 != l.between.n {
                    return Err(schema(format!("{at}.welch"), "sample sizes disagree with group stats"));
                }
                if (l.threshold - b.threshold).abs() > 1e-15 {
                    return Err(schema(format!("{at}.threshold"), "differs from bonferroni.threshold"));
                }
                if l.significant != l.recompute_significance() {
                    return Err(schema(
                        format!("{at}.significant"),
                        "flag disagrees with p-values and threshold",
                    ));
                }
            }
        }
        for (i, p) in self.probes.iter().flatten().enumerate() {
            if !(0.0..=2.0).contains(&p.distance) {
                return Err(schema(format!("probes[{i}].distance"), "cosine distance outside [0, 2]"));
            }
        }
        for (i, c) in self.coverage.iter().flatten().enumerate() {
            check_finite(format!("coverage[{i}].fraction"), c.fraction)?;
        }
        for (i, r) in self.beats_random.iter().flatten().enumerate() {
            if !(0.0..=1.0).contains(&r.fraction) {
                return Err(schema(format!("beats_random[{i}].fraction"), "fraction outside [0, 1]"));
            }
        }
        for (i, t) in self.trajectories.iter().flatten().enumerate() {
            for (j, p) in t.pairs.iter().chain(std::iter::once(&t.mean)).enumerate() {
                let at = format!("trajectories[{i}].pairs[{j}]");
                if p.distances.len() != t.layers.len() {
                    return Err(schema(format!("{at}.distances"), "one distance per layer expected"));
                }
                if p.deltas.len() + 1 != p.distances.len() || p.pattern.chars().count() != p.deltas.len() {
                    return Err(schema(format!("{at}.deltas"), "|deltas| must be |layers| - 1"));
                }
            }
        }
        Ok(())
    }
}

/// Parse and check a results file; failures become [`Error::Schema`] with the
/// path of the first violation.
pub fn validate_results(text: &str) -> Result<ResultsDocument> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: ResultsDocument = serde_path_to_error::deserialize(de)
        .map_err(|e| schema(e.path().to_string(), e.inner().to_string()))?;
    doc.check()?;
    Ok(doc)
}

pub fn validate_results_file(path: &Path) -> Result<ResultsDocument> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    validate_results(&text)
}

pub fn emit_results_json(doc: &ResultsDocument, path: &Path) -> Result<()> {
    doc.check()?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, doc.to_json()).map_err(|e| Error::io(path, e))
}

fn fmt_p(p: f64) -> String {
    if p == 0.0 {
        "0".into()
    } else if p < 1e-4 {
        format!("{p:.1e}")
    } else {
        format!("{p:.4}")
    }
}

pub fn render_markdown(doc: &ResultsDocument) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Results\n");
    let _ = writeln!(s, "- model: `{}`", doc.model_id);
    let _ = writeln!(s, "- mode: {:?}", doc.mode);
    let _ = writeln!(s, "- seed: {} ({})", doc.seed, doc.prng_algorithm);
    let _ = writeln!(s, "- config sha256: `{}`", doc.config_hash);
    let _ = writeln!(s, "- generated: {}", doc.timestamp);
    let _ = writeln!(
        s,
        "- Bonferroni: alpha {} / {} = {:.4}\n",
        doc.bonferroni.alpha, doc.bonferroni.m, doc.bonferroni.threshold
    );
    for c in &doc.comparisons {
        let _ = writeln!(
            s,
            "## {} ({} vs {}, {}, {:?})\n",
            c.name, c.first, c.second, c.pooling, c.tail
        );
        let _ = writeln!(s, "| Layer | first mean ± SD (n) | second mean ± SD (n) | d | t | p (Welch) | Perm p | MW U | p (MW) | Sig |");
        let _ = writeln!(s, "|---|---|---|---|---|---|---|---|---|---|");
        for l in &c.layers {
            let _ = writeln!(
                s,
                "| {} | {:.4} ± {:.4} ({}) | {:.4} ± {:.4} ({}) | {:.3} | {:.2} | {} | {} | {} | {} | {} |",
                l.layer,
                l.within.mean,
                l.within.sd,
                l.within.n,
                l.between.mean,
                l.between.sd,
                l.between.n,
                l.cohens_d,
                l.welch.statistic,
                fmt_p(l.welch.p_value),
                l.permutation.display_p(),
                l.mann_whitney.u_a,
                fmt_p(l.mann_whitney.result.p_value),
                if l.significant { "yes" } else { "no" }
            );
        }
        s.push('\n');
    }
    if let Some(rows) = &doc.probes {
        let _ = writeln!(s, "## Probe distances to centroid\n");
        let _ = writeln!(s, "| Probe | Pooling | Layer | Distance |\n|---|---|---|---|");
        for r in rows {
            let _ = writeln!(s, "| {} | {} | {} | {:.4} |", r.name, r.pooling, r.layer, r.distance);
        }
        s.push('\n');
    }
    if let Some(rows) = &doc.coverage {
        let _ = writeln!(s, "## Coverage\n");
        let _ = writeln!(s, "| Probe | Pooling | Layer | Fraction |\n|---|---|---|---|");
        for r in rows {
            let _ = writeln!(s, "| {} | {} | {} | {:.3} |", r.probe, r.pooling, r.layer, r.fraction);
        }
        s.push('\n');
    }
    if let Some(h) = &doc.hierarchy {
        let _ = writeln!(
            s,
            "## Probe ordering\n\n{}: {}\n",
            h.order.join(" > "),
            if h.holds { "holds at every layer" } else { "violated" }
        );
    }
    if let Some(rows) = &doc.beats_random {
        let _ = writeln!(s, "## Probe vs random controls\n");
        let _ = writeln!(s, "| Probe | Layer | d(probe) | min d(random) | n | beaten |\n|---|---|---|---|---|---|");
        for r in rows {
            let _ = writeln!(
                s,
                "| {} | {} | {:.3} | {:.3} | {} | {:.0}% |",
                r.probe, r.layer, r.probe_distance, r.min_random, r.n_random, 100.0 * r.fraction
            );
        }
        s.push('\n');
    }
    if let Some(ts) = &doc.trajectories {
        let _ = writeln!(s, "## Layer trajectories\n");
        for t in ts {
            let means: Vec<String> = t.mean.distances.iter().map(|d| format!("{d:.4}")).collect();
            let counts: Vec<String> = t.pattern_counts.iter().map(|(k, v)| format!("{k}: {v}")).collect();
            let _ = writeln!(
                s,
                "- {}: mean {} ({}, max Δ {:+.4}); pairs {}",
                t.name,
                means.join(" → "),
                t.mean.pattern,
                t.mean.max_delta,
                if counts.is_empty() { "none".into() } else { counts.join(", ") }
            );
        }
        s.push('\n');
    }
    if let Some(sw) = &doc.sweep {
        let _ = writeln!(s, "## Steering sweep\n");
        let _ = writeln!(s, "- best alpha {} (score {:.2})", sw.best_alpha, sw.best_score);
        if let Some(g) = sw.gap_fraction {
            let _ = writeln!(s, "- gap closed: {:.1}%", 100.0 * g);
        }
        let _ = writeln!(s, "- non-monotone: {}\n", sw.non_monotone);
    }
    if let Some(tb) = &doc.token_budget {
        let failed: Vec<&str> = tb.iter().filter(|t| !t.pass).map(|t| t.doc_id.as_str()).collect();
        let _ = writeln!(
            s,
            "## Token budget\n\n{} of {} documents within tolerance{}\n",
            tb.len() - failed.len(),
            tb.len(),
            if failed.is_empty() { String::new() } else { format!("; outside: {}", failed.join(", ")) }
        );
    }
    if !doc.notes.is_empty() {
        let _ = writeln!(s, "## Notes\n");
        for n in &doc.notes {
            let _ = writeln!(s, "- {n}");
        }
    }
    s
}
