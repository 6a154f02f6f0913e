// SPDX-License-Identifier: MIT OR Apache-2.0

//! Experiment manifest: which documents belong to which condition, where their
//! activation files live, and their token counts.
//!
//! ```json
//! {
//!   "model_id": "desk-transformer-d64-l8",
//!   "seed": 42,
//!   "layers": [2, 4, 6],
//!   "reference_doc": "A",
//!   "token_tolerance": 0.15,
//!   "conditions": [
//!     { "label": "A", "docs": [ { "doc_id": "A", "path": "acts/A", "token_count": 512 } ] }
//!   ]
//! }
//! ```
//!
//! `path` is a directory (relative to the manifest) holding
//! `layer_<L>.<key>.npy` files, where `key` is `raw`, `mean`, `last`, or a
//! truncated variant such as `mean-t256`.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::npy;
use crate::error::{Error, Result};

fn default_tolerance() -> f64 {
    0.15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocEntry {
    pub doc_id: String,
    pub path: PathBuf,
    pub token_count: usize,
    /// Source text (or bytes) the activations were computed from, if kept.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionEntry {
    pub label: String,
    pub docs: Vec<DocEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub model_id: String,
    pub seed: u64,
    pub layers: Vec<usize>,
    pub conditions: Vec<ConditionEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_doc: Option<String>,
    #[serde(default = "default_tolerance")]
    pub token_tolerance: f64,
    /// Directory the manifest was loaded from; relative doc paths resolve here.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentManifest {
    /// Load, then run [`ExperimentManifest::validate`] and [`ExperimentManifest::check_files`].
    pub fn load(path: &Path) -> Result<Self> {
        let mut manifest: ExperimentManifest = super::read_json(path)?;
        manifest.base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        manifest.validate()?;
        manifest.check_files()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::write_json(path, self)
    }

    /// Structural checks that need no filesystem access.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("manifest lists no layers".into()));
        }
        if self.layers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "manifest layers must be strictly increasing, got {:?}",
                self.layers
            )));
        }
        if !(0.0..1.0).contains(&self.token_tolerance) {
            return Err(Error::Config(format!(
                "token_tolerance must be in [0, 1), got {}",
                self.token_tolerance
            )));
        }
        let mut labels = HashSet::new();
        let mut docs = HashSet::new();
        for cond in &self.conditions {
            if !labels.insert(cond.label.as_str()) {
                return Err(Error::Config(format!("duplicate condition label '{}'", cond.label)));
            }
            if cond.docs.is_empty() {
                return Err(Error::Config(format!("condition '{}' has no documents", cond.label)));
            }
            for doc in &cond.docs {
                if !docs.insert(doc.doc_id.as_str()) {
                    return Err(Error::Config(format!("duplicate doc_id '{}'", doc.doc_id)));
                }
                if doc.token_count == 0 {
                    return Err(Error::Config(format!("doc '{}' has token_count 0", doc.doc_id)));
                }
            }
        }
        if let Some(r) = &self.reference_doc {
            if !docs.contains(r.as_str()) {
                return Err(Error::Config(format!("reference_doc '{r}' is not in the manifest")));
            }
        }
        Ok(())
    }

    /// Every document must have at least one parseable activation file per layer.
    pub fn check_files(&self) -> Result<()> {
        for cond in &self.conditions {
            for doc in &cond.docs {
                let dir = self.doc_dir(doc);
                for &layer in &self.layers {
                    let prefix = format!("layer_{layer}.");
                    let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
                    let mut found = None;
                    for entry in entries {
                        let entry = entry.map_err(|e| Error::io(&dir, e))?;
                        let name = entry.file_name();
                        let name = name.to_string_lossy();
                        if name.starts_with(&prefix) && name.ends_with(".npy") {
                            found = Some(entry.path());
                            break;
                        }
                    }
                    let file = found.ok_or_else(|| Error::MissingActivation {
                        doc_id: doc.doc_id.clone(),
                        layer,
                        pooling: "any".into(),
                        path: dir.clone(),
                    })?;
                    npy::read_header(&file)?;
                }
            }
        }
        Ok(())
    }

    pub fn doc_dir(&self, doc: &DocEntry) -> PathBuf {
        if doc.path.is_absolute() {
            doc.path.clone()
        } else {
            self.base_dir.join(&doc.path)
        }
    }

    pub fn condition(&self, label: &str) -> Option<&ConditionEntry> {
        self.conditions.iter().find(|c| c.label == label)
    }

    /// Label and entry for a document id.
    pub fn find_doc(&self, doc_id: &str) -> Option<(&str, &DocEntry)> {
        self.conditions.iter().find_map(|c| {
            c.docs
                .iter()
                .find(|d| d.doc_id == doc_id)
                .map(|d| (c.label.as_str(), d))
        })
    }

    pub fn all_docs(&self) -> impl Iterator<Item = (&str, &DocEntry)> {
        self.conditions
            .iter()
            .flat_map(|c| c.docs.iter().map(move |d| (c.label.as_str(), d)))
    }
}

/// Outcome of the token-budget check for one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCheck {
    pub doc_id: String,
    pub token_count: usize,
    pub pass: bool,
}

/// Largest integer deviation allowed: floor(tolerance × reference).
///
/// The product is nudged by a relative 1e-12 so that exact boundaries such as
/// 0.15 × 100 are not lost to binary rounding.
pub fn max_token_deviation(reference: usize, tolerance: f64) -> usize {
    (tolerance * reference as f64 * (1.0 + 1e-12)).floor() as usize
}

/// Inclusive [lo, hi] token range that passes the budget check.
pub fn token_budget_range(reference: usize, tolerance: f64) -> (usize, usize) {
    let dev = max_token_deviation(reference, tolerance);
    (reference.saturating_sub(dev), reference + dev)
}

pub fn within_token_budget(reference: usize, tolerance: f64, tokens: usize) -> bool {
    tokens.abs_diff(reference) <= max_token_deviation(reference, tolerance)
}

/// Check every document's token count against the reference document.
pub fn validate_token_budget(manifest: &ExperimentManifest) -> Result<Vec<TokenCheck>> {
    let reference_id = manifest
        .reference_doc
        .as_deref()
        .ok_or_else(|| Error::Config("manifest has no reference_doc".into()))?;
    let (_, reference) = manifest
        .find_doc(reference_id)
        .ok_or_else(|| Error::Config(format!("reference_doc '{reference_id}' not found")))?;
    let t_ref = reference.token_count;
    Ok(manifest
        .all_docs()
        .map(|(_, d)| TokenCheck {
            doc_id: d.doc_id.clone(),
            token_count: d.token_count,
            pass: within_token_budget(t_ref, manifest.token_tolerance, d.token_count),
        })
        .collect())
}
