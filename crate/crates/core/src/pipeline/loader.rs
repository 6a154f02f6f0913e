// SPDX-License-Identifier: MIT OR Apache-2.0

//! Resolve pooled document vectors from a manifest.
//!
//! For every (doc, layer, pooling) the pre-pooled file `layer_<L>.<key>.npy`
//! is used when present; otherwise the vector is pooled from
//! `layer_<L>.raw.npy`.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::ConditionSet;
use crate::pooling::PoolingSpec;
use crate::store::{activation_file, read_array, ExperimentManifest, PoolingTag};

/// Pooled vectors keyed by (pooling key, layer, doc id).
#[derive(Debug, Clone, Default)]
pub struct VectorTable {
    vectors: BTreeMap<(String, usize, String), Vec<f64>>,
}

impl VectorTable {
    pub fn load(
        manifest: &ExperimentManifest,
        layers: &[usize],
        pooling: &[PoolingSpec],
    ) -> Result<Self> {
        let docs: Vec<_> = manifest.all_docs().map(|(_, d)| d).collect();
        let per_doc = docs
            .par_iter()
            .map(|doc| {
                let dir = manifest.doc_dir(doc);
                let mut out = Vec::new();
                for &layer in layers {
                    let mut raw = None;
                    for spec in pooling {
                        let key = spec.key();
                        let pooled = activation_file(&dir, layer, &key);
                        let v = if pooled.exists() {
                            let rec = read_array(&pooled)?;
                            if rec.pooling == PoolingTag::Raw {
                                return Err(Error::Validation(format!(
                                    "{} holds a per-token matrix, expected a pooled vector",
                                    pooled.display()
                                )));
                            }
                            rec.vector()
                        } else {
                            if raw.is_none() {
                                let raw_path = activation_file(&dir, layer, "raw");
                                if !raw_path.exists() {
                                    return Err(Error::MissingActivation {
                                        doc_id: doc.doc_id.clone(),
                                        layer,
                                        pooling: spec.to_string(),
                                        path: pooled,
                                    });
                                }
                                raw = Some(read_array(&raw_path)?.into_data());
                            }
                            spec.apply(raw.as_ref().expect("loaded"))?
                        };
                        out.push(((key, layer, doc.doc_id.clone()), v));
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut vectors = BTreeMap::new();
        for entries in per_doc {
            vectors.extend(entries);
        }
        let table = Self { vectors };
        table.check_dims()?;
        Ok(table)
    }

    fn check_dims(&self) -> Result<()> {
        let mut dims: BTreeMap<(&str, usize), (usize, &str)> = BTreeMap::new();
        for ((key, layer, doc), v) in &self.vectors {
            match dims.get(&(key.as_str(), *layer)) {
                Some(&(d, other)) if d != v.len() => {
                    return Err(Error::Validation(format!(
                        "layer {layer} ({key}): '{doc}' has dimension {} but '{other}' has {d}",
                        v.len()
                    )))
                }
                Some(_) => {}
                None => {
                    dims.insert((key.as_str(), *layer), (v.len(), doc.as_str()));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, pooling: &PoolingSpec, layer: usize, doc_id: &str) -> Option<&[f64]> {
        self.vectors
            .get(&(pooling.key(), layer, doc_id.to_string()))
            .map(Vec::as_slice)
    }

    /// Union of the given condition groups at one layer.
    pub fn condition_set(
        &self,
        manifest: &ExperimentManifest,
        labels: &[String],
        layer: usize,
        pooling: &PoolingSpec,
    ) -> Result<ConditionSet> {
        let mut members = Vec::new();
        for label in labels {
            let cond = manifest
                .condition(label)
                .ok_or_else(|| Error::Config(format!("unknown condition label '{label}'")))?;
            for doc in &cond.docs {
                let v = self.get(pooling, layer, &doc.doc_id).ok_or_else(|| {
                    Error::MissingActivation {
                        doc_id: doc.doc_id.clone(),
                        layer,
                        pooling: pooling.to_string(),
                        path: manifest.doc_dir(doc),
                    }
                })?;
                members.push((doc.doc_id.clone(), v.to_vec()));
            }
        }
        ConditionSet::new(labels.join("+"), layer, members)
    }
}
