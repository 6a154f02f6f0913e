// SPDX-License-Identifier: MIT OR Apache-2.0

//! Experiment configuration: one JSON file plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pooling::PoolingSpec;
use crate::prng::PrngSpec;
use crate::projection::ProjectionSpec;
use crate::stats::Tail;
use crate::store::ExperimentManifest;

/// One group-vs-group comparison evaluated at every layer and pooling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Comparison {
    /// Pairwise distances inside the union of `within` against distances
    /// from that union to `between`. One-sided: within < between.
    WithinVsBetween {
        name: String,
        within: Vec<String>,
        between: String,
    },
    /// Within-group distances of two groups against each other. Two-sided.
    WithinVsWithin {
        name: String,
        first: Vec<String>,
        second: Vec<String>,
    },
}

impl Comparison {
    pub fn name(&self) -> &str {
        match self {
            Comparison::WithinVsBetween { name, .. } | Comparison::WithinVsWithin { name, .. } => name,
        }
    }

    pub fn tail(&self) -> Tail {
        match self {
            Comparison::WithinVsBetween { .. } => Tail::Less,
            Comparison::WithinVsWithin { .. } => Tail::TwoSided,
        }
    }

    fn labels(&self) -> Vec<&str> {
        match self {
            Comparison::WithinVsBetween { within, between, .. } => within
                .iter()
                .map(String::as_str)
                .chain(std::iter::once(between.as_str()))
                .collect(),
            Comparison::WithinVsWithin { first, second, .. } => {
                first.iter().chain(second).map(String::as_str).collect()
            }
        }
    }
}

/// Distance from one document to the centroid of `target` groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub name: String,
    pub doc: String,
    pub target: Vec<String>,
}

/// `(d_empty − d_probe) / (d_empty − d_core)` over named probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageSpec {
    pub probe: String,
    pub empty: String,
    pub core: String,
}

/// Compare one probe with every document of a control group, both measured
/// against the probe's target centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeatsRandomSpec {
    pub probe: String,
    pub randoms: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub name: String,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteeringSpec {
    pub positive: Vec<String>,
    pub negative: Vec<String>,
    pub layer: usize,
    #[serde(default = "mean_full")]
    pub pooling: PoolingSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionJob {
    pub labels: Vec<String>,
    pub layer: usize,
    #[serde(default = "mean_full")]
    pub pooling: PoolingSpec,
    #[serde(default)]
    pub spec: ProjectionSpec,
}

fn mean_full() -> PoolingSpec {
    PoolingSpec::MEAN_FULL
}

fn default_pooling() -> Vec<PoolingSpec> {
    vec![PoolingSpec::MEAN_FULL]
}

fn default_resamples() -> usize {
    10_000
}

fn default_level() -> f64 {
    0.95
}

fn default_alpha() -> f64 {
    0.05
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Manifest path; relative paths resolve against the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    /// Replay fixture used instead of activations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay: Option<PathBuf>,
    /// Layers to analyse; empty means every manifest layer.
    #[serde(default)]
    pub layers: Vec<usize>,
    #[serde(default = "default_pooling")]
    pub pooling: Vec<PoolingSpec>,
    #[serde(default)]
    pub comparisons: Vec<Comparison>,
    #[serde(default)]
    pub probes: Vec<ProbeSpec>,
    #[serde(default)]
    pub coverage: Vec<CoverageSpec>,
    /// Probe names expected in strictly decreasing distance order.
    #[serde(default)]
    pub hierarchy: Vec<String>,
    #[serde(default)]
    pub beats_random: Vec<BeatsRandomSpec>,
    #[serde(default)]
    pub trajectories: Vec<TrajectorySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steering: Option<SteeringSpec>,
    #[serde(default)]
    pub alpha_grid: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<ProjectionJob>,
    #[serde(default)]
    pub prng: PrngSpec,
    #[serde(default = "default_resamples")]
    pub n_permutations: usize,
    #[serde(default = "default_resamples")]
    pub n_bootstrap: usize,
    #[serde(default = "default_level")]
    pub ci_level: f64,
    /// Family-wise alpha, split across layers by Bonferroni.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            replay: None,
            layers: Vec::new(),
            pooling: default_pooling(),
            comparisons: Vec::new(),
            probes: Vec::new(),
            coverage: Vec::new(),
            hierarchy: Vec::new(),
            beats_random: Vec::new(),
            trajectories: Vec::new(),
            steering: None,
            alpha_grid: Vec::new(),
            projection: None,
            prng: PrngSpec::default(),
            n_permutations: default_resamples(),
            n_bootstrap: default_resamples(),
            ci_level: default_level(),
            alpha: default_alpha(),
            output_dir: default_out(),
            base_dir: PathBuf::new(),
        }
    }
}

/// Command-line overrides, applied after the file is parsed.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub layers: Option<Vec<usize>>,
    pub pooling: Option<PoolingSpec>,
    pub replay: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = crate::store::parse_json(&text, path)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(seed) = o.seed {
            self.prng.seed = seed;
        }
        if let Some(layers) = &o.layers {
            self.layers = layers.clone();
        }
        if let Some(p) = &o.pooling {
            self.pooling = vec![*p];
        }
        if let Some(r) = &o.replay {
            self.replay = Some(r.clone());
        }
        if let Some(out) = &o.output_dir {
            self.output_dir = out.clone();
        }
        self.validate()
    }

    /// Checks that need neither the manifest nor the filesystem.
    pub fn validate(&self) -> Result<()> {
        if self.manifest.is_none() && self.replay.is_none() {
            return Err(Error::Config("config needs either 'manifest' or 'replay'".into()));
        }
        if !self.prng.is_supported() {
            return Err(Error::Config(format!(
                "unsupported PRNG algorithm '{}'",
                self.prng.algorithm
            )));
        }
        if self.pooling.is_empty() {
            return Err(Error::Config("pooling grid is empty".into()));
        }
        if self.n_permutations == 0 || self.n_bootstrap == 0 {
            return Err(Error::Config("resample counts must be positive".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::Config(format!("ci_level must be in (0, 1), got {}", self.ci_level)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        let mut names = std::collections::HashSet::new();
        for c in &self.comparisons {
            if !names.insert(c.name()) {
                return Err(Error::Config(format!("duplicate comparison name '{}'", c.name())));
            }
        }
        let probe_names: Vec<&str> = self.probes.iter().map(|p| p.name.as_str()).collect();
        let known = |n: &str, what: &str| {
            if probe_names.contains(&n) {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} refers to unknown probe '{n}'")))
            }
        };
        for c in &self.coverage {
            known(&c.probe, "coverage")?;
            known(&c.empty, "coverage")?;
            known(&c.core, "coverage")?;
        }
        for h in &self.hierarchy {
            known(h, "hierarchy")?;
        }
        for b in &self.beats_random {
            known(&b.probe, "beats_random")?;
        }
        Ok(())
    }

    pub fn manifest_path(&self) -> Option<PathBuf> {
        self.manifest.as_ref().map(|m| self.resolve(m))
    }

    pub fn replay_path(&self) -> Option<PathBuf> {
        self.replay.as_ref().map(|r| self.resolve(r))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Layers after defaulting to the manifest's list.
    pub fn effective_layers(&self, manifest: &ExperimentManifest) -> Vec<usize> {
        if self.layers.is_empty() {
            manifest.layers.clone()
        } else {
            self.layers.clone()
        }
    }

    /// Cross-checks against a loaded manifest.
    pub fn check_against(&self, manifest: &ExperimentManifest) -> Result<()> {
        let layers = self.effective_layers(manifest);
        if layers.is_empty() {
            return Err(Error::Config("no layers selected".into()));
        }
        for l in &layers {
            if !manifest.layers.contains(l) {
                return Err(Error::Config(format!("layer {l} is not in the manifest")));
            }
        }
        let label = |l: &str| {
            manifest
                .condition(l)
                .map(|_| ())
                .ok_or_else(|| Error::Config(format!("unknown condition label '{l}'")))
        };
        for c in &self.comparisons {
            for l in c.labels() {
                label(l)?;
            }
        }
        for p in &self.probes {
            if manifest.find_doc(&p.doc).is_none() {
                return Err(Error::Config(format!("probe '{}' refers to unknown doc '{}'", p.name, p.doc)));
            }
            for l in &p.target {
                label(l)?;
            }
        }
        for b in &self.beats_random {
            label(&b.randoms)?;
        }
        for t in &self.trajectories {
            for l in &t.labels {
                label(l)?;
            }
        }
        if let Some(s) = &self.steering {
            for l in s.positive.iter().chain(&s.negative) {
                label(l)?;
            }
        }
        if let Some(p) = &self.projection {
            for l in &p.labels {
                label(l)?;
            }
        }
        Ok(())
    }

    /// SHA-256 of the compact JSON form (after overrides). The output
    /// directory is left out: it does not affect results.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("output_dir");
        }
        let json = serde_json::to_vec(&value).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"manifest": "m.json"}"#).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.pooling, vec![PoolingSpec::MEAN_FULL]);
        assert_eq!(cfg.prng.seed, 42);
        assert_eq!(cfg.n_permutations, 10_000);
    }

    #[test]
    fn comparison_json_shape() {
        let c: Comparison = serde_json::from_str(
            r#"{"kind": "within_vs_between", "name": "h1", "within": ["A", "B"], "between": "C"}"#,
        )
        .unwrap();
        assert_eq!(c.tail(), Tail::Less);
        assert_eq!(c.labels(), ["A", "B", "C"]);
    }

    #[test]
    fn unknown_field_reports_path() {
        let err = crate::store::parse_json::<ExperimentConfig>(
            r#"{"manifest": "m.json", "comparisons": [{"kind": "within_vs_between", "name": "x", "within": [], "between": "C", "bogus": 1}]}"#,
            Path::new("c.json"),
        )
        .unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("comparisons[0]"), "{err}");
    }

    #[test]
    fn overrides_apply_and_change_hash() {
        let mut cfg = ExperimentConfig {
            manifest: Some("m.json".into()),
            ..Default::default()
        };
        let h0 = cfg.hash();
        cfg.apply(&Overrides {
            seed: Some(7),
            layers: Some(vec![1, 2]),
            pooling: Some("last:512".parse().unwrap()),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(cfg.prng.seed, 7);
        assert_eq!(cfg.layers, vec![1, 2]);
        assert_ne!(cfg.hash(), h0);
    }

    #[test]
    fn rejects_unknown_probe_reference() {
        let cfg = ExperimentConfig {
            manifest: Some("m.json".into()),
            hierarchy: vec!["nope".into()],
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
