// SPDX-License-Identifier: MIT OR Apache-2.0

//! Desk corpora and the extraction step that turns them into the shared
//! NPY + manifest layout.
//!
//! Layout under the output directory:
//!
//! ```text
//! manifest.json
//! docs/<doc_id>.bin                        source bytes
//! activations/<doc_id>/layer_<L>.<key>.npy pooled vectors (and raw states)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::clusters::SyntheticClusters;
use super::desk_model::{DeskModel, DeskModelConfig};
use super::perturb::{paraphrase_perturb, random_bytes};
use crate::error::{Error, Result};
use crate::pooling::PoolingSpec;
use crate::prng::PrngSpec;
use crate::store::{
    activation_file, write_array, ActivationRecord, ConditionEntry, DType, DocEntry,
    ExperimentManifest, PoolingTag,
};

/// Paraphrase-style corpus: one base document (`A`), perturbed copies (`B`)
/// and unrelated random documents (`C`).
///
/// With `signal_len` set, only the first `signal_len` bytes carry the shared
/// content; every document then gets its own random tail of `tail_len` bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeskCorpusSpec {
    pub seed: u64,
    pub doc_len: usize,
    pub n_perturbed: usize,
    pub n_unrelated: usize,
    pub perturb_rate: f64,
    pub signal_len: Option<usize>,
    pub tail_len: usize,
}

impl Default for DeskCorpusSpec {
    fn default() -> Self {
        Self {
            seed: 42,
            doc_len: 192,
            n_perturbed: 7,
            n_unrelated: 7,
            perturb_rate: 0.05,
            signal_len: None,
            tail_len: 0,
        }
    }
}

impl DeskCorpusSpec {
    /// Signal in the first 256 bytes followed by a long unrelated tail.
    pub fn early_signal(seed: u64) -> Self {
        Self {
            seed,
            doc_len: 256,
            signal_len: Some(256),
            tail_len: 768,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeskDoc {
    pub doc_id: String,
    pub condition: String,
    pub tokens: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeskCorpus {
    pub docs: Vec<DeskDoc>,
}

impl DeskCorpus {
    pub fn build(spec: &DeskCorpusSpec) -> Result<Self> {
        if spec.doc_len == 0 {
            return Err(Error::Config("doc_len must be >= 1".into()));
        }
        let prng = PrngSpec::new(spec.seed);
        let mut rng = prng.rng();
        let head_len = spec.signal_len.unwrap_or(spec.doc_len);
        let base = random_bytes(head_len, &mut rng);
        let mut tail_rng = prng.derive(7).rng();
        let mut finish = |mut head: Vec<u8>| {
            if spec.signal_len.is_some() {
                head.extend(random_bytes(spec.tail_len, &mut tail_rng));
            }
            head
        };
        let mut docs = vec![DeskDoc {
            doc_id: "A".into(),
            condition: "A".into(),
            tokens: finish(base.clone()),
        }];
        for i in 1..=spec.n_perturbed {
            docs.push(DeskDoc {
                doc_id: format!("B{i}"),
                condition: "B".into(),
                tokens: finish(paraphrase_perturb(&base, spec.perturb_rate, &mut rng)?),
            });
        }
        for i in 1..=spec.n_unrelated {
            docs.push(DeskDoc {
                doc_id: format!("C{i}"),
                condition: "C".into(),
                tokens: finish(random_bytes(head_len, &mut rng)),
            });
        }
        Ok(Self { docs })
    }

    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for d in &self.docs {
            if !out.contains(&d.condition) {
                out.push(d.condition.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractOptions {
    pub layers: Vec<usize>,
    pub pooling: Vec<PoolingSpec>,
    /// Also persist per-token states (`layer_<L>.raw.npy`).
    pub store_raw: bool,
    pub dtype: DType,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            layers: vec![2, 4, 6],
            pooling: vec![PoolingSpec::MEAN_FULL],
            store_raw: false,
            dtype: DType::F32,
        }
    }
}

/// Run the desk model over every document and write the activation layout
/// plus `manifest.json` into `out_dir`. Documents are processed in parallel;
/// files are written as each document finishes.
pub fn extract_desk(
    corpus: &DeskCorpus,
    model_cfg: &DeskModelConfig,
    options: &ExtractOptions,
    out_dir: &Path,
) -> Result<ExperimentManifest> {
    if options.layers.is_empty() {
        return Err(Error::Config("extract needs at least one layer".into()));
    }
    if let Some(&bad) = options
        .layers
        .iter()
        .find(|&&l| l == 0 || l > model_cfg.n_layers)
    {
        return Err(Error::Config(format!(
            "layer {bad} is outside the desk model's 1..={}",
            model_cfg.n_layers
        )));
    }
    if options.pooling.is_empty() && !options.store_raw {
        return Err(Error::Config("extract needs a pooling spec or store_raw".into()));
    }
    let model = DeskModel::new(model_cfg.clone())?;
    let entries = corpus
        .docs
        .par_iter()
        .map(|doc| extract_one(&model, doc, options, out_dir))
        .collect::<Result<Vec<_>>>()?;

    let mut conditions: Vec<ConditionEntry> = Vec::new();
    for (doc, entry) in corpus.docs.iter().zip(entries) {
        match conditions.iter_mut().find(|c| c.label == doc.condition) {
            Some(c) => c.docs.push(entry),
            None => conditions.push(ConditionEntry {
                label: doc.condition.clone(),
                docs: vec![entry],
            }),
        }
    }
    let mut layers = options.layers.clone();
    layers.sort_unstable();
    layers.dedup();
    let manifest = ExperimentManifest {
        model_id: model_cfg.model_id(),
        seed: model_cfg.seed,
        layers,
        reference_doc: corpus.docs.first().map(|d| d.doc_id.clone()),
        conditions,
        token_tolerance: 0.15,
        base_dir: out_dir.to_path_buf(),
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

fn extract_one(
    model: &DeskModel,
    doc: &DeskDoc,
    options: &ExtractOptions,
    out_dir: &Path,
) -> Result<DocEntry> {
    let source = PathBuf::from("docs").join(format!("{}.bin", doc.doc_id));
    let rel_dir = PathBuf::from("activations").join(&doc.doc_id);
    let src_path = out_dir.join(&source);
    if let Some(parent) = src_path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&src_path, &doc.tokens).map_err(|e| Error::io(&src_path, e))?;

    let states = model.forward(&doc.tokens)?;
    let dir = out_dir.join(&rel_dir);
    let t = doc.tokens.len();
    for &layer in &options.layers {
        let hidden = &states[layer - 1];
        if options.store_raw {
            let rec = ActivationRecord::new(
                &doc.doc_id,
                &doc.condition,
                layer,
                PoolingTag::Raw,
                t,
                options.dtype,
                hidden.clone(),
            )?;
            write_array(&rec, &activation_file(&dir, layer, "raw"))?;
        }
        for spec in &options.pooling {
            let v = spec.apply(hidden)?;
            let rec = ActivationRecord::pooled(&doc.doc_id, &doc.condition, layer, spec.tag(), t, &v)?;
            write_array(&rec, &activation_file(&dir, layer, &spec.key()))?;
        }
    }
    Ok(DocEntry {
        doc_id: doc.doc_id.clone(),
        path: rel_dir,
        token_count: t,
        source: Some(source),
    })
}

/// Write synthetic clusters as pooled vectors (layer 0) plus a manifest.
/// Condition labels are the cluster set labels.
pub fn write_clusters(clusters: &SyntheticClusters, seed: u64, out_dir: &Path) -> Result<ExperimentManifest> {
    let mut conditions = Vec::new();
    for set in &clusters.sets {
        let mut docs = Vec::new();
        for (id, v) in set.members() {
            let rel = PathBuf::from("activations").join(id);
            let rec = ActivationRecord::pooled(id, &set.label, 0, PoolingTag::Mean, 1, v)?;
            write_array(&rec, &activation_file(&out_dir.join(&rel), 0, "mean"))?;
            docs.push(DocEntry {
                doc_id: id.clone(),
                path: rel,
                token_count: 1,
                source: None,
            });
        }
        conditions.push(ConditionEntry {
            label: set.label.clone(),
            docs,
        });
    }
    let manifest = ExperimentManifest {
        model_id: format!("synthetic-clusters-d{}", clusters.centers.first().map_or(0, Vec::len)),
        seed,
        layers: vec![0],
        conditions,
        reference_doc: None,
        token_tolerance: 0.15,
        base_dir: out_dir.to_path_buf(),
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::read_array;

    #[test]
    fn corpus_shape() {
        let c = DeskCorpus::build(&DeskCorpusSpec::default()).unwrap();
        assert_eq!(c.docs.len(), 15);
        assert_eq!(c.labels(), ["A", "B", "C"]);
        assert!(c.docs.iter().all(|d| d.tokens.len() == 192));
        let a = &c.docs[0].tokens;
        let b1 = &c.docs[1].tokens;
        let diff = a.iter().zip(b1).filter(|(x, y)| x != y).count();
        assert!(diff > 0 && diff < 40, "{diff}");
    }

    #[test]
    fn early_signal_tails_are_unrelated() {
        let c = DeskCorpus::build(&DeskCorpusSpec::early_signal(3)).unwrap();
        assert!(c.docs.iter().all(|d| d.tokens.len() == 1024));
        let (a, b) = (&c.docs[0].tokens, &c.docs[1].tokens);
        let same_tail = a[256..].iter().zip(&b[256..]).filter(|(x, y)| x == y).count();
        assert!(same_tail < 20);
    }

    #[test]
    fn extract_writes_layout() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DeskCorpusSpec {
            doc_len: 12,
            n_perturbed: 1,
            n_unrelated: 1,
            ..Default::default()
        };
        let corpus = DeskCorpus::build(&spec).unwrap();
        let cfg = DeskModelConfig {
            d_model: 8,
            n_layers: 2,
            ..Default::default()
        };
        let opts = ExtractOptions {
            layers: vec![1, 2],
            store_raw: true,
            ..Default::default()
        };
        let m = extract_desk(&corpus, &cfg, &opts, dir.path()).unwrap();
        assert_eq!(m.conditions.len(), 3);
        let loaded = ExperimentManifest::load(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(loaded.layers, vec![1, 2]);
        let rec = read_array(&dir.path().join("activations/B1/layer_2.mean.npy")).unwrap();
        assert_eq!(rec.doc_id, "B1");
        assert_eq!(rec.dim(), 8);
        let raw = read_array(&dir.path().join("activations/B1/layer_2.raw.npy")).unwrap();
        assert_eq!(raw.data().shape(), (12, 8));
        assert!(matches!(
            extract_desk(&corpus, &cfg, &ExtractOptions { layers: vec![3], ..opts }, dir.path()),
            Err(Error::Config(_))
        ));
    }
}
